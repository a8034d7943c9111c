"""Baseline weight-conditioning schemes applied after optimizer steps."""

from typing import Optional, Tuple

import numpy as np

from ..errors import UsageError
from ..kernel_ops import EPS, unroll
from .layers import WeightLayer
from .model import ParamStore

__all__ = ["power_iteration", "spectral_normalize", "weight_clip"]


def _unit(x: np.ndarray) -> np.ndarray:
    return x / max(float(np.linalg.norm(x)), EPS)


def power_iteration(
    matrix: np.ndarray, iters: int, u: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Estimate the top singular value of `matrix` (`m x n`) starting from `u` in R^m.

    Returns `(sigma, u, v)` with `sigma = ||matrix @ v||`.  The estimate never
    exceeds the true top singular value and is non-decreasing in `iters` from a
    fixed start, so it is the error `sigma_1 - sigma` that is non-increasing;
    `sigma` itself only moves up towards `sigma_1`.
    """
    if iters < 1:
        raise UsageError(f"power iteration needs at least one step, got {iters}")

    u = _unit(np.asarray(u, dtype=np.float64))
    v = np.zeros(matrix.shape[1])
    for _ in range(iters):
        v = _unit(matrix.T @ u)
        u = _unit(matrix @ v)
    sigma = float(np.linalg.norm(matrix @ v))
    return sigma, u, v


def spectral_normalize(
    layer: WeightLayer, power_iters: int = 1, rng: Optional[np.random.Generator] = None
) -> float:
    """Divide the layer's weights by their estimated spectral norm, in place.

    The estimate runs on the unrolled kernel matrix.  The left singular vector
    estimate is kept on the layer (`layer.sn_u`) and warm-starts the next call.
    Returns the sigma the weights were divided by.
    """
    if power_iters < 1:
        raise UsageError(f"`power_iters` must be >= 1, got {power_iters}")

    shape = layer.shape
    matrix = unroll(layer.weight, shape).values
    if layer.sn_u is None:
        start = rng.standard_normal(shape.m) if rng is not None else np.ones(shape.m)
        layer.sn_u = _unit(start)

    sigma, u, _ = power_iteration(matrix, power_iters, layer.sn_u)
    layer.sn_u = u
    if sigma > EPS:
        layer.params["weight"] /= sigma
    return sigma


def weight_clip(model: ParamStore, c: float) -> None:
    """Clamp every weight entry of the store's weight-bearing layers to [-c, c]."""
    if not c > 0:
        raise UsageError(f"clip bound must be positive, got {c}")
    for layer in model.weight_layers():
        np.clip(layer.params["weight"], -c, c, out=layer.params["weight"])
