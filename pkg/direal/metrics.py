"""Diagnostics for collapse, divergence and filter redundancy."""

from collections import deque
from dataclasses import dataclass as value_dataclass
from dataclasses import field
from typing import Deque, Iterable, Optional, Sequence

import numpy as np

from .errors import UsageError
from .kernel_ops import KernelMatrix
from .diversity import gram

__all__ = [
    "HQ_RADIUS_SIGMAS",
    "OWNERSHIP_FRACTION",
    "HISTOGRAM_BINS",
    "ScoreSample",
    "ModeSpec",
    "ModeCoverage",
    "CosineStats",
    "ScoreWindow",
    "wasserstein1d",
    "window_divergence",
    "mode_coverage",
    "cosine_stats",
]

HQ_RADIUS_SIGMAS = 3.0
OWNERSHIP_FRACTION = 0.01
HISTOGRAM_BINS = 20


@value_dataclass(eq=False, frozen=True)
class ScoreSample:
    "Discriminator outputs pooled over one or more batches."

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if np.any((v < 0) | (v > 1)):
            raise UsageError("discriminator scores must lie in [0, 1]")
        object.__setattr__(self, "values", v)


@value_dataclass(eq=False, frozen=True)
class ModeSpec:
    """Centers of a 2-D mixture and the standard deviation of each component."""

    centers: np.ndarray
    sigma: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2 or len(c) == 0:
            raise UsageError(f"centers must be a non-empty (k, 2) array, got {c.shape}")
        if len(np.unique(c, axis=0)) != len(c):
            raise UsageError("mode centers must be distinct")
        if not self.sigma > 0:
            raise UsageError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "centers", c)


@value_dataclass(frozen=True)
class ModeCoverage:
    covered: int
    hq_fraction: float


@value_dataclass(eq=False, frozen=True)
class CosineStats:
    max_offdiag: float
    mean_abs: float
    histogram: np.ndarray


def wasserstein1d(a: Sequence[float], b: Sequence[float]) -> float:
    """Exact W1 distance between the empirical distributions of `a` and `b`.

    Integrates `|F_a(x) - F_b(x)|` over the merged support, which equals the
    mean absolute difference of sorted samples when both have equal length.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise UsageError("wasserstein1d needs two non-empty samples")

    support = np.sort(np.concatenate([a, b]))
    deltas = np.diff(support)
    cdf_a = np.searchsorted(a, support[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, support[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


def window_divergence(
    real_batches: Iterable[np.ndarray], fake_batches: Iterable[np.ndarray]
) -> float:
    """W1 between discriminator scores pooled over several real and fake batches."""
    real = list(real_batches)
    fake = list(fake_batches)
    if not real or not fake:
        raise UsageError("window_divergence needs at least one real and one fake batch")
    real_scores = ScoreSample(np.concatenate([np.ravel(b) for b in real]))
    fake_scores = ScoreSample(np.concatenate([np.ravel(b) for b in fake]))
    return wasserstein1d(real_scores.values, fake_scores.values)


def mode_coverage(samples: np.ndarray, modes: ModeSpec) -> ModeCoverage:
    """Count the mixture modes a set of 2-D samples reaches.

    A sample is high quality when it lies within `3 * sigma` of its nearest
    center.  A center is covered when it owns at least `max(1, 0.01 * N)`
    high-quality samples.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    if len(samples) == 0:
        raise UsageError("mode_coverage needs at least one sample")

    dists = np.linalg.norm(samples[:, None, :] - modes.centers[None, :, :], axis=-1)
    nearest = np.argmin(dists, axis=1)
    hq = dists[np.arange(len(samples)), nearest] <= HQ_RADIUS_SIGMAS * modes.sigma

    counts = np.bincount(nearest[hq], minlength=len(modes.centers))
    threshold = max(1.0, OWNERSHIP_FRACTION * len(samples))
    return ModeCoverage(
        covered=int(np.sum(counts >= threshold)),
        hq_fraction=float(np.mean(hq)),
    )


def cosine_stats(km: KernelMatrix) -> Optional[CosineStats]:
    """Off-diagonal cosine statistics of a layer; `None` for single-column layers."""
    n = km.cols
    if n < 2:
        return None

    omega = gram(km, "cosine").values
    off = omega[~np.eye(n, dtype=bool)]
    hist, _ = np.histogram(np.clip(off, -1.0, 1.0), bins=HISTOGRAM_BINS, range=(-1.0, 1.0))
    abs_off = np.abs(off)
    return CosineStats(
        max_offdiag=float(abs_off.max()),
        mean_abs=float(abs_off.mean()),
        histogram=hist,
    )


@value_dataclass
class ScoreWindow:
    """Rolling pool of discriminator scores over the last `size` batches."""

    size: int = 30
    real: Deque[np.ndarray] = field(default_factory=deque)
    fake: Deque[np.ndarray] = field(default_factory=deque)

    def push(self, d_real: np.ndarray, d_fake: np.ndarray) -> None:
        self.real.append(np.asarray(d_real, dtype=np.float64).ravel())
        self.fake.append(np.asarray(d_fake, dtype=np.float64).ravel())
        while len(self.real) > self.size:
            self.real.popleft()
            self.fake.popleft()

    def divergence(self) -> float:
        "W1 between the pooled real and fake scores."
        if not self.real:
            raise UsageError("score window is empty")
        return window_divergence(self.real, self.fake)
