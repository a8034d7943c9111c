import itertools

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.stats import wasserstein_distance

from direal.errors import UsageError
from direal.kernel_ops import KernelMatrix
from direal.metrics import (
    HISTOGRAM_BINS,
    ModeSpec,
    ScoreSample,
    ScoreWindow,
    cosine_stats,
    mode_coverage,
    wasserstein1d,
    window_divergence,
)
from direal.data import ring_centers


def transport_cost(a, b) -> float:
    """Brute-force optimal transport between two uniform empirical measures."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    n, m = len(a), len(b)
    cost = np.abs(a[:, None] - b[None, :]).ravel()
    rows = np.zeros((n, n * m))
    cols = np.zeros((m, n * m))
    for i, j in itertools.product(range(n), range(m)):
        rows[i, i * m + j] = 1.0
        cols[j, i * m + j] = 1.0
    res = linprog(
        cost,
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)]),
        bounds=(0, None),
        method="highs",
    )
    return float(res.fun)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ([0.3, 0.1, 0.9], [0.9, 0.3, 0.1], 0.0),
        ([0.0], [1.0], 1.0),
        ([0.0, 1.0], [0.5, 0.5], 0.5),
        ([0.0, 0.0, 1.0], [0.0, 1.0], 1.0 / 6.0),
    ],
)
def test_wasserstein_examples(a, b, expected):
    assert wasserstein1d(a, b) == pytest.approx(expected, abs=1e-12)


def test_wasserstein_matches_optimal_transport():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.choice(np.linspace(0, 1, 7), size=int(rng.integers(1, 7)))
        b = rng.random(int(rng.integers(1, 7)))
        assert wasserstein1d(a, b) == pytest.approx(transport_cost(a, b), abs=1e-9)


def test_wasserstein_agrees_with_scipy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.random(int(rng.integers(1, 50))), rng.random(int(rng.integers(1, 50)))
        assert wasserstein1d(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-12)


def test_wasserstein_metric_properties():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b, c = (rng.random(int(rng.integers(1, 10))) for _ in range(3))
        assert wasserstein1d(a, b) == pytest.approx(wasserstein1d(b, a), abs=1e-15)
        assert wasserstein1d(a, b) >= 0
        assert wasserstein1d(a, c) <= wasserstein1d(a, b) + wasserstein1d(b, c) + 1e-9


def test_wasserstein_rejects_empty():
    with pytest.raises(UsageError):
        wasserstein1d([], [0.5])


def test_score_sample_range():
    ScoreSample(np.array([0.0, 0.5, 1.0]))
    with pytest.raises(UsageError):
        ScoreSample(np.array([0.2, 1.5]))


def test_score_window_pools_last_batches():
    window = ScoreWindow(size=2)
    window.push(np.full(4, 0.0), np.full(4, 1.0))
    window.push(np.full(4, 0.9), np.full(4, 0.1))
    window.push(np.full(4, 0.8), np.full(4, 0.2))
    assert len(window.real) == 2
    expected = wasserstein1d(np.r_[np.full(4, 0.9), np.full(4, 0.8)], np.r_[np.full(4, 0.1), np.full(4, 0.2)])
    assert window.divergence() == pytest.approx(expected)
    assert window_divergence(window.real, window.fake) == window.divergence()


def test_score_window_empty():
    with pytest.raises(UsageError):
        ScoreWindow().divergence()


RING = ModeSpec(centers=ring_centers(8, 2.0), sigma=0.05)


def test_mode_coverage_all_centers():
    cov = mode_coverage(np.repeat(RING.centers, 10, axis=0), RING)
    assert cov.covered == 8
    assert cov.hq_fraction == 1.0


def test_mode_coverage_collapse():
    samples = RING.centers[[3]] + 0.01 * np.random.default_rng(3).standard_normal((500, 2))
    assert mode_coverage(samples, RING).covered == 1


def test_mode_coverage_far_away():
    samples = np.random.default_rng(4).uniform(50, 60, size=(300, 2))
    cov = mode_coverage(samples, RING)
    assert cov.covered == 0
    assert cov.hq_fraction == 0.0


def test_mode_coverage_ownership_threshold():
    # 1% of 1000 samples is 10: a mode with 9 hits is not covered
    samples = np.vstack([np.repeat(RING.centers[[0]], 991, axis=0), np.repeat(RING.centers[[1]], 9, axis=0)])
    assert mode_coverage(samples, RING).covered == 1


def test_mode_coverage_permutation_invariant():
    rng = np.random.default_rng(5)
    samples = RING.centers[rng.integers(8, size=400)] + 0.1 * rng.standard_normal((400, 2))
    base = mode_coverage(samples, RING)
    shuffled = ModeSpec(centers=RING.centers[rng.permutation(8)], sigma=RING.sigma)
    assert mode_coverage(samples[rng.permutation(400)], shuffled) == base


@pytest.mark.parametrize(
    "kwargs",
    [
        {"centers": np.zeros((2, 2)), "sigma": 0.1},
        {"centers": np.eye(2), "sigma": 0.0},
        {"centers": np.zeros((0, 2)), "sigma": 0.1},
    ],
)
def test_mode_spec_validation(kwargs):
    with pytest.raises(UsageError):
        ModeSpec(**kwargs)


def test_cosine_stats_orthogonal():
    stats = cosine_stats(KernelMatrix.from_columns(np.eye(5)[:, :4]))
    assert stats.max_offdiag == 0.0
    assert stats.mean_abs == 0.0
    assert stats.histogram.sum() == 12
    assert len(stats.histogram) == HISTOGRAM_BINS


def test_cosine_stats_duplicate_pair():
    values = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 1.0]])
    stats = cosine_stats(KernelMatrix.from_columns(values))
    assert stats.max_offdiag == pytest.approx(1.0)
    assert stats.histogram[-1] >= 2


def test_cosine_stats_single_column_is_skipped():
    assert cosine_stats(KernelMatrix.from_columns(np.ones((3, 1)))) is None


def test_cosine_stats_random_mean_abs():
    theta = np.random.default_rng(6).standard_normal((64, 32))
    stats = cosine_stats(KernelMatrix.from_columns(theta))
    expected = np.sqrt(2.0 / (np.pi * 64))
    # E|cos| and its spread for random unit vectors in R^64
    stderr = np.sqrt((1.0 / 64 - expected**2) / (32 * 31 / 2))
    assert abs(stats.mean_abs - expected) < 3 * stderr + 1e-3
