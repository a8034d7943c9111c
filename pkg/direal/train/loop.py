"""Alternating generator/discriminator updates with the diversity penalty.

Each player minimizes its own adversarial loss plus its own weighted
diversity loss: the discriminator `d_loss + lambda_d * J_D`, the generator
`g_loss + lambda_g * J_G`.  One discriminator update precedes each generator
update.
"""

from dataclasses import dataclass as value_dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import wandb

from ..artifacts import HistoryWriter, write_samples
from ..data import Dataset
from ..diversity import apply_diversity, layer_diversity, selected_layers
from ..errors import ConfigurationError, NonFiniteLossError, UsageError
from ..kernel_ops import unroll
from ..metrics import ScoreWindow, cosine_stats
from ..nn import (
    AdamState,
    ParamStore,
    adam_step,
    backward,
    forward,
    init,
    save_checkpoint,
    spectral_normalize,
    weight_clip,
)
from . import architectures
from .interface import HISTORY_COLUMNS, GanModel, MetricsRecord, TrainConfig
from .losses import d_loss, d_loss_grad, g_loss, g_loss_grad

__all__ = [
    "TrainResult",
    "build_gan",
    "history_columns",
    "train_step",
    "train",
    "sample",
]

MetricsSink = Callable[[MetricsRecord], None]


@value_dataclass(eq=False)
class TrainResult:
    history: List[MetricsRecord]
    model: GanModel
    checkpoint: Optional[Path] = None


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


def build_gan(cfg: TrainConfig, item_shape: Tuple[int, ...]) -> GanModel:
    """Initialize both players for items of `item_shape`.

    The run seed is split into four independent streams: generator init,
    discriminator init, latent draws and epoch shuffling.
    """
    item_shape = tuple(item_shape)
    batchnorm = "batchnorm" in cfg.parts
    g_seed, d_seed, latent_seed, data_seed = np.random.SeedSequence(cfg.seed).spawn(4)

    if len(item_shape) == 1:
        output = cfg.generator_output or "identity"
        g_specs = architectures.point_generator(
            cfg.latent_dim, cfg.hidden_units, item_shape[0], output, batchnorm, cfg.hidden_layers
        )
        d_specs = architectures.point_discriminator(
            item_shape[0], cfg.hidden_units, batchnorm, cfg.hidden_layers
        )
    elif len(item_shape) == 3:
        output = cfg.generator_output or "tanh"
        g_specs = architectures.image_generator(
            cfg.latent_dim, cfg.base_channels, item_shape, output, batchnorm, cfg.conv_blocks
        )
        d_specs = architectures.image_discriminator(
            cfg.base_channels, item_shape, batchnorm, cfg.conv_blocks
        )
    else:
        raise ConfigurationError(f"unsupported item shape {item_shape}", key="dataset")

    def adam() -> AdamState:
        return AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)

    return GanModel(
        generator=init(g_specs, _seed_int(g_seed)),
        discriminator=init(d_specs, _seed_int(d_seed), input_shape=item_shape),
        g_opt=adam(),
        d_opt=adam(),
        latent_dim=cfg.latent_dim,
        latent_rng=np.random.default_rng(latent_seed),
        data_rng=np.random.default_rng(data_seed),
        scores=ScoreWindow(size=cfg.w_div_window),
    )


def history_columns(model: GanModel, cfg: TrainConfig) -> List[str]:
    "Fixed history header: the scalar columns, then one `max_cos_l{i}` per regularized layer."
    div = cfg.diversity
    n_layers = len(selected_layers(model.discriminator, div)) + len(
        selected_layers(model.generator, div)
    )
    return list(HISTORY_COLUMNS) + [f"max_cos_l{i}" for i in range(n_layers)]


def _max_cos(store: ParamStore, cfg: TrainConfig) -> List[Optional[float]]:
    out: List[Optional[float]] = []
    for layer in selected_layers(store, cfg.diversity):
        stats = cosine_stats(unroll(layer.weight, layer.shape))
        out.append(None if stats is None else stats.max_offdiag)
    return out


def _state_dump(model: GanModel, **scalars: float) -> Dict[str, Any]:
    norms = {}
    for name, store in (("generator", model.generator), ("discriminator", model.discriminator)):
        for i, layer in zip(store.weight_layer_indices(), store.weight_layers()):
            norms[f"{name}.{i}.weight"] = float(np.linalg.norm(layer.weight))
    return {"step": model.step, **{k: float(v) for k, v in scalars.items()}, "weight_norms": norms}


def _snapshot_buffers(store: ParamStore) -> List[Dict[str, np.ndarray]]:
    return [{k: v.copy() for k, v in layer.buffers.items()} for layer in store.layers]


def _restore_buffers(store: ParamStore, snapshot: List[Dict[str, np.ndarray]]) -> None:
    for layer, buffers in zip(store.layers, snapshot):
        layer.buffers.update(buffers)


def _check_finite(model: GanModel, what: str, **scalars: float) -> None:
    if not all(np.isfinite(v) for v in scalars.values()):
        raise NonFiniteLossError(
            f"non-finite {what} at step {model.step + 1}",
            state=_state_dump(model, **scalars),
        )


def train_step(model: GanModel, real_batch: np.ndarray, cfg: TrainConfig) -> MetricsRecord:
    """One discriminator update followed by one generator update."""
    G, D = model.generator, model.discriminator
    div = cfg.diversity
    parts = cfg.parts
    use_direal = "direal" in parts

    real_batch = np.asarray(real_batch, dtype=np.float64)
    if tuple(real_batch.shape[1:]) != D.input_shape:
        raise ConfigurationError(
            f"batch items {real_batch.shape[1:]} do not match the discriminator input "
            f"{D.input_shape}",
            key="dataset",
        )
    n = len(real_batch)

    # discriminator
    z = model.latent_rng.standard_normal((n, model.latent_dim))
    fake, _ = forward(G, z, train=True)
    d_real, real_cache = forward(D, real_batch, train=True)
    d_fake, fake_cache = forward(D, fake, train=True)
    loss_d = d_loss(d_real, d_fake)
    _check_finite(model, "discriminator loss", d_loss=loss_d)

    grad_real, grad_fake = d_loss_grad(d_real, d_fake)
    backward(D, real_cache, grad_real)
    backward(D, fake_cache, grad_fake)
    apply_diversity(D, div, div.lambda_d if use_direal else 0.0)
    adam_step(D, model.d_opt)
    if "spectral" in parts:
        for layer in D.weight_layers():
            spectral_normalize(layer, cfg.spectral_iters)
    if "clip" in parts:
        weight_clip(D, cfg.clip_value)

    # generator; D normalizes with batch statistics as in its own update, but
    # its running statistics only ever see the discriminator step
    z = model.latent_rng.standard_normal((n, model.latent_dim))
    fake, g_cache = forward(G, z, train=True)
    d_stats = _snapshot_buffers(D)
    d_gen, d_cache = forward(D, fake, train=True)
    _restore_buffers(D, d_stats)
    loss_g = g_loss(d_gen, cfg.generator_loss)
    _check_finite(model, "generator loss", d_loss=loss_d, g_loss=loss_g)

    grad_fake_input = backward(D, d_cache, g_loss_grad(d_gen, cfg.generator_loss))
    D.zero_grad()
    backward(G, g_cache, grad_fake_input)
    apply_diversity(G, div, div.lambda_g if use_direal else 0.0)
    adam_step(G, model.g_opt)

    model.step += 1
    model.scores.push(d_real, d_fake)
    record = MetricsRecord(
        step=model.step,
        d_loss=loss_d,
        g_loss=loss_g,
        j_d=float(sum(layer_diversity(D, div))),
        j_g=float(sum(layer_diversity(G, div))),
        w_div=model.scores.divergence(),
        d_real_mean=float(np.mean(d_real)),
        d_fake_mean=float(np.mean(d_fake)),
        max_cos=tuple(_max_cos(D, cfg) + _max_cos(G, cfg)),
    )
    if not record.is_finite():
        raise NonFiniteLossError(
            f"non-finite metrics at step {model.step}",
            state=_state_dump(model, d_loss=loss_d, g_loss=loss_g, J_D=record.j_d, J_G=record.j_g),
        )
    return record


def sample(generator: ParamStore, n: int, seed: int) -> np.ndarray:
    """`n` generator outputs from latents drawn with `seed`, batchnorm in eval mode."""
    if n < 1:
        raise UsageError(f"sample count must be >= 1, got {n}")
    z = np.random.default_rng(seed).standard_normal((n,) + generator.input_shape)
    out, _ = forward(generator, z, train=False)
    return out


def _warn_single_column_layers(model: GanModel, cfg: TrainConfig) -> None:
    for name, store in (("discriminator", model.discriminator), ("generator", model.generator)):
        for layer in selected_layers(store, cfg.diversity):
            if layer.shape.n < 2:
                wandb.termwarn(
                    f"{name} layer with a single filter has no cosine statistics; "
                    "its max_cos column stays empty"
                )


def train(
    cfg: TrainConfig,
    dataset: Dataset,
    out_dir: Union[str, Path, None] = None,
    sink: Optional[MetricsSink] = None,
) -> TrainResult:
    """Train on `dataset` for `cfg.epochs` shuffled epochs (or `cfg.max_steps` steps).

    A metrics record is emitted every `eval_every` steps and after the last
    step.  With `out_dir`, emitted records are appended to `history.csv`,
    samples are dumped to `samples/` every `sample_every` steps and
    checkpoints are written to `checkpoints/`.  `sink` receives every
    emitted record.
    """
    steps_per_epoch = len(dataset) // cfg.batch_size
    if steps_per_epoch == 0:
        raise ConfigurationError(
            f"dataset of {len(dataset)} items is smaller than one batch",
            key="batch_size",
        )
    total = cfg.epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total = min(total, cfg.max_steps)

    model = build_gan(cfg, dataset.item_shape)
    _warn_single_column_layers(model, cfg)

    out = Path(out_dir) if out_dir is not None else None
    writer = HistoryWriter(out / "history.csv", history_columns(model, cfg)) if out else None
    sample_seed = _seed_int(np.random.SeedSequence(cfg.seed).spawn(5)[4])

    history: List[MetricsRecord] = []
    checkpoint: Optional[Path] = None
    while model.step < total:
        order = model.data_rng.permutation(len(dataset))
        for b in range(steps_per_epoch):
            if model.step >= total:
                break
            batch = dataset.items[order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            record = train_step(model, batch, cfg)
            step = record.step

            if step % cfg.eval_every == 0 or step == total:
                history.append(record)
                wandb.termlog(
                    f"step {step}: d_loss={record.d_loss:.4f} g_loss={record.g_loss:.4f} "
                    f"J_D={record.j_d:.4f} J_G={record.j_g:.4f} w_div={record.w_div:.4f}"
                )
                if writer is not None:
                    writer.append([record.as_dict()])
                if sink is not None:
                    sink(record)

            if out is None:
                continue
            if step % cfg.sample_every == 0:
                write_samples(
                    out / "samples" / f"step_{step:06d}",
                    sample(model.generator, 64, sample_seed),
                )
            if cfg.checkpoint_every is not None and step % cfg.checkpoint_every == 0:
                save_checkpoint(
                    out / "checkpoints" / f"step_{step:06d}.ckpt",
                    model.generator,
                    model.discriminator,
                )

    if out is not None:
        checkpoint = save_checkpoint(
            out / "checkpoints" / "final.ckpt", model.generator, model.discriminator
        )
    return TrainResult(history=history, model=model, checkpoint=checkpoint)
