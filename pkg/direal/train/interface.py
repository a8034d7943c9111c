"""Configuration and state for adversarial training."""

from dataclasses import field
from dataclasses import dataclass as value_dataclass
from typing import Dict, FrozenSet, List, Literal, Optional, Tuple, Union

import numpy as np
from annotated_types import Annotated, Ge, Gt, Le, Lt
from pydantic import AfterValidator, ConfigDict, PositiveInt
from pydantic.dataclasses import dataclass

from ..diversity import DiversityConfig, Penalty, Variant
from ..errors import ConfigurationError
from ..metrics import ScoreWindow
from ..nn import AdamState, ParamStore
from ..utils.validators import validate_layer_selector

__all__ = [
    "RegularizerMode",
    "GeneratorLoss",
    "REGULARIZER_MODES",
    "regularizer_parts",
    "TrainConfig",
    "GanModel",
    "MetricsRecord",
    "HISTORY_COLUMNS",
]

dataclass_config = ConfigDict(validate_assignment=True, extra="forbid")

RegularizerMode = Literal[
    "none",
    "direal",
    "spectral",
    "clip",
    "batchnorm-only",
    "direal+spectral",
    "direal+clip",
    "direal+batchnorm",
]
REGULARIZER_MODES: Tuple[str, ...] = RegularizerMode.__args__  # type: ignore[attr-defined]

GeneratorLoss = Literal["saturating", "non_saturating"]
GeneratorOutput = Literal["tanh", "identity"]
DatasetName = Literal["ring", "grid", "idx"]

HISTORY_COLUMNS = (
    "step",
    "d_loss",
    "g_loss",
    "J_D",
    "J_G",
    "w_div",
    "d_real_mean",
    "d_fake_mean",
)


def regularizer_parts(mode: str) -> FrozenSet[str]:
    "Components of a regularizer mode, e.g. `direal+clip` -> {direal, clip}."
    if mode not in REGULARIZER_MODES:
        raise ConfigurationError(f"unknown mode {mode!r}", key="regularizer")
    if mode == "none":
        return frozenset()
    if mode == "batchnorm-only":
        return frozenset({"batchnorm"})
    return frozenset(mode.split("+"))


@dataclass(config=dataclass_config)
class TrainConfig:
    """Hyperparameters of one training run.

    Defaults follow the DCGAN-style protocol: Adam with `lr=1e-4`,
    `beta1=0.0`, `beta2=0.9`, batch size 64, `tau=0.5`, `lambda_d=1.0` and
    `lambda_g=0.01`.

    Attributes:
        lr (float): Adam step size for both players.
        beta1 (float): Adam first-moment decay.
        beta2 (float): Adam second-moment decay.
        batch_size (int): Real samples per step; the generator uses the same count.
        epochs (int): Passes over the dataset. Each epoch is `len(dataset) // batch_size`
            steps; leftover samples are dropped.
        max_steps (Optional[int]): Stop after this many steps even if epochs remain.
        latent_dim (int): Size of the generator input.
        tau (float): Diversity mask threshold.
        lambda_g (float): Generator diversity penalty factor.
        lambda_d (float): Discriminator diversity penalty factor.
        variant (Literal["raw", "cosine"]): Gram matrix the diversity loss is built on.
        layer_selector (Optional[Tuple[int, ...]]): Weight-bearing layer ordinals to
            regularize, applied to both players. `None` selects all but the output layer.
        regularizer (str): One of `REGULARIZER_MODES`.
        clip_value (float): Weight clip bound for modes that include `clip`.
        spectral_iters (int): Power-iteration steps per update for spectral modes.
        generator_loss (Literal["saturating", "non_saturating"]): Generator objective.
        generator_output (Optional[Literal["tanh", "identity"]]): Generator head.
            `None` picks `identity` for 2-D point data and `tanh` for images.
        seed (int): Root seed for initialization, latents and shuffling.
        eval_every (int): Emit a metrics record every this many steps.
        checkpoint_every (Optional[int]): Write an intermediate checkpoint every this
            many steps. The final checkpoint is always written.
        sample_every (int): Dump generated samples every this many steps.
        w_div_window (int): Batches pooled for the score divergence.
        dataset (Literal["ring", "grid", "idx"]): Which dataset the run uses.
        hidden_units (int): Width of the point-data MLPs.
        hidden_layers (int): Hidden layers in each point-data MLP.
        base_channels (int): Channel count of the first image conv block.
        conv_blocks (int): Conv (discriminator) or transposed-conv (generator) layers
            per image network. Two of them are stride 2; the rest are 3x3 stride 1.
    """

    lr: Annotated[float, Gt(0)] = 1e-4
    beta1: Annotated[float, Ge(0), Lt(1)] = 0.0
    beta2: Annotated[float, Ge(0), Lt(1)] = 0.9
    batch_size: PositiveInt = 64
    epochs: PositiveInt = 100
    max_steps: Optional[PositiveInt] = None
    latent_dim: PositiveInt = 32

    tau: Annotated[float, Ge(0), Le(1)] = 0.5
    lambda_g: Penalty = 0.01
    lambda_d: Penalty = 1.0
    variant: Variant = "cosine"
    layer_selector: Annotated[
        Optional[Tuple[int, ...]], AfterValidator(validate_layer_selector)
    ] = None

    regularizer: RegularizerMode = "direal"
    clip_value: Annotated[float, Gt(0)] = 0.01
    spectral_iters: PositiveInt = 1
    generator_loss: GeneratorLoss = "non_saturating"
    generator_output: Optional[GeneratorOutput] = None

    seed: Annotated[int, Ge(0)] = 0
    eval_every: PositiveInt = 100
    checkpoint_every: Optional[PositiveInt] = None
    sample_every: PositiveInt = 500
    w_div_window: PositiveInt = 30

    dataset: DatasetName = "ring"
    hidden_units: PositiveInt = 256
    hidden_layers: PositiveInt = 3
    base_channels: PositiveInt = 32
    conv_blocks: Annotated[int, Ge(2)] = 5

    @property
    def diversity(self) -> DiversityConfig:
        return DiversityConfig(
            tau=self.tau,
            lambda_g=self.lambda_g,
            lambda_d=self.lambda_d,
            variant=self.variant,
            layer_selector=self.layer_selector,
        )

    @property
    def parts(self) -> FrozenSet[str]:
        return regularizer_parts(self.regularizer)


@value_dataclass
class GanModel:
    """Generator and discriminator with their optimizer state.

    `latent_rng` draws every latent batch during training and `data_rng`
    shuffles epochs; both are spawned from the run seed.
    """

    generator: ParamStore
    discriminator: ParamStore
    g_opt: AdamState
    d_opt: AdamState
    latent_dim: int
    latent_rng: np.random.Generator
    data_rng: np.random.Generator
    scores: ScoreWindow = field(default_factory=ScoreWindow)
    step: int = 0

    def __post_init__(self):
        if self.generator.input_shape != (self.latent_dim,):
            raise ConfigurationError(
                f"generator input {self.generator.input_shape} does not match "
                f"latent_dim {self.latent_dim}",
                key="latent_dim",
            )
        if self.generator.output_shape != self.discriminator.input_shape:
            raise ConfigurationError(
                f"generator output {self.generator.output_shape} does not match "
                f"discriminator input {self.discriminator.input_shape}"
            )


@value_dataclass(frozen=True)
class MetricsRecord:
    """Scalars recorded after one training step.

    `max_cos` holds the largest off-diagonal |cosine| of each regularized
    layer, discriminator layers first, then generator layers.  Entries are
    `None` for layers with a single column.
    """

    step: int
    d_loss: float
    g_loss: float
    j_d: float
    j_g: float
    w_div: float
    d_real_mean: float
    d_fake_mean: float
    max_cos: Tuple[Optional[float], ...] = ()

    def as_dict(self) -> Dict[str, Union[int, float, None]]:
        "Flat mapping keyed by history column name."
        row: Dict[str, Union[int, float, None]] = {
            "step": self.step,
            "d_loss": self.d_loss,
            "g_loss": self.g_loss,
            "J_D": self.j_d,
            "J_G": self.j_g,
            "w_div": self.w_div,
            "d_real_mean": self.d_real_mean,
            "d_fake_mean": self.d_fake_mean,
        }
        for i, value in enumerate(self.max_cos):
            row[f"max_cos_l{i}"] = value
        return row

    def is_finite(self) -> bool:
        scalars: List[float] = [self.d_loss, self.g_loss, self.j_d, self.j_g, self.w_div]
        return bool(np.all(np.isfinite(scalars)))
