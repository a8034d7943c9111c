"""Masked Gram-matrix diversity penalty on kernel matrices.

For a kernel matrix with columns `theta_i`, the Gram matrix is
`Omega = Theta^T Theta` and the mask `M` selects the off-diagonal pairs with
`|Omega_ij| >= tau`.  The per-layer loss is `0.5 * sum_ij Omega_ij^2 M_ij`, with
both `(i, j)` and `(j, i)` counted.

Two variants are supported:

- `cosine` (default): columns are unit-normalized first, so `Omega` holds
  pairwise cosine similarities and the loss is invariant to filter scale.
- `raw`: the Gram matrix of the unnormalized columns.

`M` is piecewise constant in `Theta` and is held fixed when differentiating.
"""

from dataclasses import dataclass as value_dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from annotated_types import Annotated, Ge, Le
from pydantic import AfterValidator, ConfigDict
from pydantic.dataclasses import dataclass

from .errors import ConfigurationError
from .kernel_ops import KernelMatrix, fold, normalize_columns, unroll
from .nn.layers import WeightLayer
from .nn.model import ParamStore
from .utils.validators import validate_finite, validate_layer_selector

__all__ = [
    "DiversityConfig",
    "GramMatrix",
    "BinaryMask",
    "gram",
    "mask",
    "diversity_loss",
    "diversity_grad_paper",
    "diversity_grad_exact",
    "selected_layers",
    "layer_diversity",
    "apply_diversity",
]

dataclass_config = ConfigDict(validate_assignment=True, extra="forbid")

Variant = Literal["raw", "cosine"]
Penalty = Annotated[float, Ge(0), AfterValidator(validate_finite)]


@dataclass(config=dataclass_config)
class DiversityConfig:
    """Settings for the diversity penalty.

    Attributes:
        tau (float): Mask threshold in [0, 1]. Pairs with `|Omega_ij| >= tau` are
            penalized; `tau=0` pushes a layer towards full orthogonality.
        lambda_g (float): Penalty factor for the generator.
        lambda_d (float): Penalty factor for the discriminator.
        variant (Literal["raw", "cosine"]): Which Gram matrix the loss is built on.
        layer_selector (Optional[Tuple[int, ...]]): Ordinals of the weight-bearing
            layers to regularize (0 is the first dense/conv layer). `None` selects
            every weight-bearing layer except the final output layer.
    """

    tau: Annotated[float, Ge(0), Le(1)] = 0.5
    lambda_g: Penalty = 0.01
    lambda_d: Penalty = 1.0
    variant: Variant = "cosine"
    layer_selector: Annotated[
        Optional[Tuple[int, ...]], AfterValidator(validate_layer_selector)
    ] = None


@value_dataclass(eq=False, frozen=True)
class GramMatrix:
    values: np.ndarray

    @property
    def size(self) -> int:
        return self.values.shape[0]


@value_dataclass(eq=False, frozen=True)
class BinaryMask:
    values: np.ndarray


def _columns(km: KernelMatrix, variant: Variant) -> np.ndarray:
    if variant == "cosine":
        return normalize_columns(km).values
    return km.values


def gram(km: KernelMatrix, variant: Variant = "cosine") -> GramMatrix:
    theta = _columns(km, variant)
    a = theta.T @ theta
    return GramMatrix(values=(a + a.T) / 2.0)


def mask(omega: GramMatrix, tau: float) -> BinaryMask:
    m = (np.abs(omega.values) >= tau).astype(np.float64)
    np.fill_diagonal(m, 0.0)
    return BinaryMask(values=m)


def diversity_loss(
    km: KernelMatrix, cfg: DiversityConfig, frozen_mask: Optional[BinaryMask] = None
) -> float:
    """Per-layer diversity loss.

    `frozen_mask` replaces the mask computed at `km`; finite-difference checks
    use it to hold the mask at the evaluation point.
    """
    omega = gram(km, cfg.variant)
    m = frozen_mask if frozen_mask is not None else mask(omega, cfg.tau)
    return 0.5 * float(np.sum(omega.values**2 * m.values))


def diversity_grad_paper(km: KernelMatrix, cfg: DiversityConfig) -> np.ndarray:
    """`Theta (Omega * M)` exactly as the closed form is usually written.

    This omits the factor 2 and, for the cosine variant, the normalization
    Jacobian.  Training uses `diversity_grad_exact`.
    """
    theta = _columns(km, cfg.variant)
    omega = gram(km, cfg.variant)
    m = mask(omega, cfg.tau)
    return theta @ (omega.values * m.values)


def diversity_grad_exact(
    km: KernelMatrix, cfg: DiversityConfig, frozen_mask: Optional[BinaryMask] = None
) -> np.ndarray:
    """Gradient of `diversity_loss` with respect to the raw columns of `km`."""
    omega = gram(km, cfg.variant)
    m = frozen_mask if frozen_mask is not None else mask(omega, cfg.tau)
    weighted = omega.values * m.values

    if cfg.variant == "raw":
        return 2.0 * km.values @ weighted

    unit = normalize_columns(km)
    g_hat = 2.0 * unit.values @ weighted
    # project out the radial component, then scale by 1 / ||theta_i||
    radial = np.sum(unit.values * g_hat, axis=0)
    tangent = g_hat - unit.values * radial
    grad = np.zeros_like(tangent)
    live = ~km.degenerate
    grad[:, live] = tangent[:, live] / km.column_norms[live]
    return grad


def selected_layers(store: ParamStore, cfg: DiversityConfig) -> List[WeightLayer]:
    """Resolve `cfg.layer_selector` against the store's weight-bearing layers."""
    weight_layers = store.weight_layers()
    if cfg.layer_selector is None:
        return weight_layers[:-1]

    out_of_range = [i for i in cfg.layer_selector if i >= len(weight_layers)]
    if out_of_range:
        raise ConfigurationError(
            f"indices {out_of_range} out of range, model has "
            f"{len(weight_layers)} weight-bearing layers",
            key="layer_selector",
        )
    return [weight_layers[i] for i in cfg.layer_selector]


def layer_diversity(store: ParamStore, cfg: DiversityConfig) -> List[float]:
    """Per-layer losses for the selected layers, gradients untouched."""
    return [
        diversity_loss(unroll(layer.weight, layer.shape), cfg)
        for layer in selected_layers(store, cfg)
    ]


def apply_diversity(store: ParamStore, cfg: DiversityConfig, penalty: float) -> float:
    """Add `penalty` times the diversity gradient into each selected layer's weight gradient.

    Returns the unweighted total loss over the selected layers.  With
    `penalty == 0` the gradient buffers are left untouched.
    """
    total = 0.0
    for layer in selected_layers(store, cfg):
        shape = layer.shape
        km = unroll(layer.weight, shape)
        omega = gram(km, cfg.variant)
        m = mask(omega, cfg.tau)
        total += 0.5 * float(np.sum(omega.values**2 * m.values))
        if penalty != 0.0:
            grad = diversity_grad_exact(km, cfg, frozen_mask=m)
            layer.grads["weight"] += penalty * fold(grad, shape)
    return total
