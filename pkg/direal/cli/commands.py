"""`direal` command-line entry point.

Exit codes: 0 on success, 1 on aborted runs, failed gradient checks or
unreadable files, 2 on invalid configuration.
"""

import argparse
import dataclasses
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import wandb
from pydantic import BaseModel, TypeAdapter
from pydantic_core import to_json

from .. import gradcheck
from ..artifacts import write_samples
from ..data import Dataset
from ..diversity import selected_layers
from ..errors import ConfigurationError, DirealError, NonFiniteLossError
from ..kernel_ops import unroll
from ..metrics import cosine_stats, mode_coverage, wasserstein1d
from ..nn import ParamStore, forward, load_checkpoint
from ..train import MetricsRecord, REGULARIZER_MODES, sample, train
from .config import ExperimentConfig, load_config, load_dataset

__all__ = [
    "EvalSummary",
    "LayerReport",
    "cmd_train",
    "cmd_gradcheck",
    "cmd_eval",
    "cmd_dump_samples",
    "cmd_compare",
    "main",
]

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

# fraction of steps at the end of a run that time-averaged metrics cover
TAIL_FRACTION = 0.25


class EvalSummary(BaseModel):
    kind: str = "summary"
    checkpoint: str
    covered: Optional[int] = None
    n_modes: Optional[int] = None
    hq_fraction: Optional[float] = None
    w_div: float


class LayerReport(BaseModel):
    kind: str = "layer"
    player: str
    ordinal: int
    skipped: bool = False
    max_offdiag: Optional[float] = None
    mean_abs: Optional[float] = None
    histogram: List[int] = []


def _write_config(cfg: ExperimentConfig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(TypeAdapter(ExperimentConfig).dump_json(cfg, indent=2))


def _wandb_sink(cfg: ExperimentConfig):
    run = wandb.init(
        mode=cfg.wandb_mode,
        project=cfg.wandb_project,
        dir=str(cfg.out_dir),
        config=TypeAdapter(ExperimentConfig).dump_python(cfg, mode="json"),
    )

    def log(record: MetricsRecord) -> None:
        row = {k: v for k, v in record.as_dict().items() if v is not None and k != "step"}
        run.log(row, step=record.step)

    return run, log


def cmd_train(cfg: ExperimentConfig) -> int:
    dataset = load_dataset(cfg)
    out = Path(cfg.out_dir)
    _write_config(cfg, out / "config.json")

    run, sink = _wandb_sink(cfg)
    try:
        result = train(cfg.train_config, dataset, out_dir=out, sink=sink)
    except NonFiniteLossError as e:
        (out / "abort_state.json").write_bytes(to_json(e.state, indent=2))
        wandb.termerror(f"Training aborted: {e}. State written to {out / 'abort_state.json'}")
        return EXIT_FAILED
    finally:
        run.finish()

    wandb.termlog(f"Final checkpoint: {result.checkpoint}")
    return EXIT_OK


def cmd_gradcheck(cfg: ExperimentConfig, corrupt: float = 0.0) -> int:
    results = gradcheck.run_all(seed=cfg.seed, corrupt=corrupt)
    for r in results:
        status = "ok" if r.passed else "FAIL"
        wandb.termlog(
            f"{r.name}: max relative error {r.error:.3e} "
            f"(threshold {r.threshold:.0e}, {r.cases} cases) {status}"
        )

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "gradcheck.jsonl", "wb") as f:
        for r in results:
            f.write(to_json({**dataclasses.asdict(r), "passed": r.passed}) + b"\n")

    failures = [r.name for r in results if not r.passed]
    if failures:
        wandb.termerror(f"Gradient checks failed: {', '.join(failures)}")
        return EXIT_FAILED
    return EXIT_OK


def _layer_reports(player: str, store: ParamStore, cfg: ExperimentConfig) -> List[LayerReport]:
    reports = []
    for ordinal, layer in enumerate(selected_layers(store, cfg.diversity)):
        km = unroll(layer.weight, layer.shape)
        n_zero = int(np.sum(km.degenerate))
        if n_zero:
            wandb.termwarn(f"{player} layer {ordinal}: {n_zero} zero-norm filters count as orthogonal")
        stats = cosine_stats(km)
        if stats is None:
            wandb.termwarn(f"{player} layer {ordinal} has a single filter, skipping cosine statistics")
            reports.append(LayerReport(player=player, ordinal=ordinal, skipped=True))
            continue
        reports.append(
            LayerReport(
                player=player,
                ordinal=ordinal,
                max_offdiag=stats.max_offdiag,
                mean_abs=stats.mean_abs,
                histogram=[int(c) for c in stats.histogram],
            )
        )
    return reports


def _score_divergence(
    discriminator: ParamStore, dataset: Dataset, fake: np.ndarray, seed: int
) -> float:
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(dataset))[: len(fake)]
    d_real, _ = forward(discriminator, dataset.items[idx], train=False)
    d_fake, _ = forward(discriminator, fake, train=False)
    return wasserstein1d(d_real, d_fake)


def cmd_eval(cfg: ExperimentConfig, checkpoint: Optional[Path] = None) -> int:
    checkpoint = checkpoint or Path(cfg.out_dir) / "checkpoints" / "final.ckpt"
    generator, discriminator = load_checkpoint(checkpoint)
    dataset = load_dataset(cfg)
    fake = sample(generator, cfg.eval_samples, cfg.seed)

    summary = EvalSummary(
        checkpoint=str(checkpoint),
        w_div=_score_divergence(discriminator, dataset, fake, cfg.seed),
    )
    if dataset.modes is not None:
        coverage = mode_coverage(fake, dataset.modes)
        summary.covered = coverage.covered
        summary.n_modes = len(dataset.modes.centers)
        summary.hq_fraction = coverage.hq_fraction

    lines: List[BaseModel] = [summary]
    lines += _layer_reports("discriminator", discriminator, cfg)
    lines += _layer_reports("generator", generator, cfg)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval.jsonl", "w") as f:
        for line in lines:
            f.write(line.model_dump_json() + "\n")

    coverage_text = (
        f"covered={summary.covered}/{summary.n_modes} hq_fraction={summary.hq_fraction:.3f} "
        if summary.covered is not None
        else ""
    )
    wandb.termlog(f"{coverage_text}w_div={summary.w_div:.4f}")
    return EXIT_OK


def cmd_dump_samples(
    cfg: ExperimentConfig, checkpoint: Optional[Path] = None, n: int = 64, out: Optional[Path] = None
) -> int:
    checkpoint = checkpoint or Path(cfg.out_dir) / "checkpoints" / "final.ckpt"
    generator, _ = load_checkpoint(checkpoint)
    stem = out or Path(cfg.out_dir) / "samples" / "dump"
    path = write_samples(stem, sample(generator, n, cfg.seed))
    wandb.termlog(f"Wrote {n} samples to {path}")
    return EXIT_OK


def _tail_mean(history: Sequence[MetricsRecord], total_steps: int) -> float:
    cutoff = (1.0 - TAIL_FRACTION) * total_steps
    tail = [r.j_d for r in history if r.step > cutoff] or [history[-1].j_d]
    return float(np.mean(tail))


def cmd_compare(
    cfg: ExperimentConfig, modes: Sequence[str] = ("none", "direal"), seeds: int = 5
) -> int:
    """Matched-seed runs of several regularizer modes on the configured dataset."""
    rows = []
    for seed in range(cfg.seed, cfg.seed + seeds):
        run_cfg = dataclasses.replace(cfg, seed=seed)
        dataset = load_dataset(run_cfg)
        for mode in modes:
            mode_cfg = dataclasses.replace(run_cfg.train_config, regularizer=mode)
            try:
                result = train(mode_cfg, dataset)
            except NonFiniteLossError as e:
                wandb.termwarn(f"seed {seed}, mode {mode}: {e}")
                rows.append({"seed": seed, "mode": mode})
                continue

            row = {
                "seed": seed,
                "mode": mode,
                "J_D_tail_mean": _tail_mean(result.history, result.model.step),
                "w_div": result.history[-1].w_div,
            }
            if dataset.modes is not None:
                coverage = mode_coverage(
                    sample(result.model.generator, cfg.eval_samples, seed), dataset.modes
                )
                row["covered"] = coverage.covered
                row["hq_fraction"] = coverage.hq_fraction
            rows.append(row)

    table = pd.DataFrame(rows)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "comparison.csv", index=False, float_format="%.17g")

    medians = table.drop(columns="seed").groupby("mode", sort=False).median()
    for mode, stats in medians.iterrows():
        text = " ".join(f"{k}={v:.4g}" for k, v in stats.items() if pd.notna(v))
        wandb.termlog(f"{mode} (median over {seeds} seeds): {text}")
    return EXIT_OK


def _mode_list(value: str) -> List[str]:
    modes = [m.strip() for m in value.split(",") if m.strip()]
    unknown = [m for m in modes if m not in REGULARIZER_MODES]
    if unknown or not modes:
        raise argparse.ArgumentTypeError(
            f"modes must be a comma-separated subset of {', '.join(REGULARIZER_MODES)}"
        )
    return modes


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", type=Path, help="override the output directory")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config setting (repeatable)",
    )

    parser = argparse.ArgumentParser(
        prog="direal", description="Diversity-regularized GAN experiments."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="train a GAN and write its artifacts")

    p = sub.add_parser("gradcheck", parents=[common], help="run finite-difference checks")
    p.add_argument(
        "--corrupt-gradient",
        type=float,
        nargs="?",
        const=1e-2,
        default=0.0,
        help=argparse.SUPPRESS,
    )

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path)

    p = sub.add_parser("dump-samples", parents=[common], help="write generator samples")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("-n", type=_positive, default=64)
    p.add_argument("--samples-out", type=Path, help="output path without extension")

    p = sub.add_parser("compare", parents=[common], help="matched-seed mode comparison")
    p.add_argument("--modes", type=_mode_list, default=["none", "direal"])
    p.add_argument("--seeds", type=_positive, default=5)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, seed=args.seed, out_dir=args.out)
        commands: Dict[str, Callable[[], int]] = {
            "train": lambda: cmd_train(cfg),
            "gradcheck": lambda: cmd_gradcheck(cfg, args.corrupt_gradient),
            "eval": lambda: cmd_eval(cfg, args.checkpoint),
            "dump-samples": lambda: cmd_dump_samples(cfg, args.checkpoint, args.n, args.samples_out),
            "compare": lambda: cmd_compare(cfg, args.modes, args.seeds),
        }
        return commands[args.command]()
    except ConfigurationError as e:
        wandb.termerror(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except (DirealError, OSError) as e:
        wandb.termerror(str(e))
        return EXIT_FAILED
