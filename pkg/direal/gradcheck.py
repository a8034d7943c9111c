"""Finite-difference checks for the diversity gradient and the layer engine.

Errors are norm-wise relative errors, `||g - g_fd|| / max(||g|| + ||g_fd||, tiny)`.
Diversity masks are frozen at the evaluation point, so the checks measure
the gradient of a smooth function.
"""

from dataclasses import dataclass as value_dataclass
from typing import Callable, List, Sequence

import numpy as np

from .diversity import (
    BinaryMask,
    DiversityConfig,
    apply_diversity,
    diversity_grad_exact,
    diversity_grad_paper,
    diversity_loss,
    gram,
    mask,
    selected_layers,
)
from .kernel_ops import KernelMatrix, unroll
from .nn import (
    ActivationSpec,
    ConvSpec,
    ConvTransposeSpec,
    DenseSpec,
    ParamStore,
    ReshapeSpec,
    backward,
    forward,
    init,
)
from .train.losses import d_loss, d_loss_grad

__all__ = [
    "FD_STEP",
    "DIVERSITY_TOLERANCE",
    "MODEL_TOLERANCE",
    "PAPER_FACTOR_TOLERANCE",
    "MASK_MARGIN",
    "CheckResult",
    "relative_error",
    "check_diversity",
    "check_paper_factor",
    "check_discriminator",
    "check_layers",
    "run_all",
]

FD_STEP = 1e-6
DIVERSITY_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4
PAPER_FACTOR_TOLERANCE = 1e-12
MASK_MARGIN = 1e-3
TAUS = (0.0, 0.3, 0.5, 0.8)


@value_dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    threshold: float
    cases: int

    @property
    def passed(self) -> bool:
        return bool(self.error < self.threshold)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = float(np.linalg.norm(analytic - numeric))
    den = max(float(np.linalg.norm(analytic) + np.linalg.norm(numeric)), 1e-300)
    return num / den


def numeric_gradient(f: Callable[[], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of `f()` with respect to `x`, perturbing `x` in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        plus = f()
        x[idx] = orig - step
        minus = f()
        x[idx] = orig
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def _off_mask_boundary(km: KernelMatrix, cfg: DiversityConfig) -> bool:
    omega = gram(km, cfg.variant).values
    off = omega[~np.eye(km.cols, dtype=bool)]
    return bool(np.all(np.abs(np.abs(off) - cfg.tau) > MASK_MARGIN))


def _diversity_instances(n_cases: int, seed: int):
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < n_cases:
        m = int(rng.integers(2, 9))
        n = int(rng.integers(2, 7))
        tau = TAUS[produced % len(TAUS)]
        variant = "cosine" if produced % 2 == 0 else "raw"
        km = KernelMatrix.from_columns(rng.standard_normal((m, n)))
        cfg = DiversityConfig(tau=tau, variant=variant)
        if variant == "raw":
            # keep raw inner products on the same scale as tau
            km = KernelMatrix.from_columns(km.values / np.sqrt(m))
        if _off_mask_boundary(km, cfg):
            produced += 1
            yield km, cfg


def check_diversity(n_cases: int = 100, seed: int = 0, corrupt: float = 0.0) -> CheckResult:
    """Exact diversity gradient against central differences of the loss."""
    worst = 0.0
    for km, cfg in _diversity_instances(n_cases, seed):
        frozen = mask(gram(km, cfg.variant), cfg.tau)
        analytic = diversity_grad_exact(km, cfg, frozen_mask=frozen) * (1.0 + corrupt)
        theta = km.values.copy()

        def loss() -> float:
            return diversity_loss(KernelMatrix.from_columns(theta), cfg, frozen_mask=frozen)

        worst = max(worst, relative_error(analytic, numeric_gradient(loss, theta)))
    return CheckResult("diversity_grad_exact", worst, DIVERSITY_TOLERANCE, n_cases)


def check_paper_factor(n_cases: int = 50, seed: int = 1) -> CheckResult:
    """Raw variant: the closed form equals half the exact gradient, elementwise."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_cases):
        km = KernelMatrix.from_columns(rng.standard_normal((int(rng.integers(2, 9)), 5)))
        cfg = DiversityConfig(tau=TAUS[i % len(TAUS)], variant="raw")
        diff = diversity_grad_paper(km, cfg) - 0.5 * diversity_grad_exact(km, cfg)
        worst = max(worst, float(np.max(np.abs(diff))))
    return CheckResult("diversity_grad_paper = 0.5 * exact (raw)", worst, PAPER_FACTOR_TOLERANCE, n_cases)


def _randomize(store: ParamStore, rng: np.random.Generator, scale: float) -> None:
    for _, param, _ in store.named_parameters():
        param[...] = scale * rng.standard_normal(param.shape)


def _store_gradient_error(
    store: ParamStore, objective: Callable[[], float], corrupt: float
) -> float:
    analytic = [grad.copy() * (1.0 + corrupt) for _, _, grad in store.named_parameters()]
    numeric = [numeric_gradient(objective, param) for _, param, _ in store.named_parameters()]
    return relative_error(
        np.concatenate([a.ravel() for a in analytic]),
        np.concatenate([n.ravel() for n in numeric]),
    )


def check_discriminator(
    lambda_d: float = 1.0, tau: float = 0.5, seed: int = 2, corrupt: float = 0.0
) -> CheckResult:
    """`d_loss + lambda_d * J_D` on a 2-16-16-1 discriminator at a random state."""
    rng = np.random.default_rng(seed)
    specs = [
        DenseSpec(2, 16),
        ActivationSpec("leaky_relu"),
        DenseSpec(16, 16),
        ActivationSpec("leaky_relu"),
        DenseSpec(16, 1),
        ActivationSpec("sigmoid"),
    ]
    store = init(specs, seed)
    _randomize(store, rng, 0.3)
    real = rng.standard_normal((8, 2))
    fake = rng.standard_normal((8, 2))
    cfg = DiversityConfig(tau=tau, lambda_d=lambda_d)

    frozen: List[BinaryMask] = [
        mask(gram(unroll(layer.weight, layer.shape), cfg.variant), cfg.tau)
        for layer in selected_layers(store, cfg)
    ]

    def objective() -> float:
        d_real, _ = forward(store, real)
        d_fake, _ = forward(store, fake)
        penalty = sum(
            diversity_loss(unroll(layer.weight, layer.shape), cfg, frozen_mask=m)
            for layer, m in zip(selected_layers(store, cfg), frozen)
        )
        return d_loss(d_real, d_fake) + cfg.lambda_d * penalty

    store.zero_grad()
    d_real, real_cache = forward(store, real)
    d_fake, fake_cache = forward(store, fake)
    grad_real, grad_fake = d_loss_grad(d_real, d_fake)
    backward(store, real_cache, grad_real)
    backward(store, fake_cache, grad_fake)
    apply_diversity(store, cfg, cfg.lambda_d)

    error = _store_gradient_error(store, objective, corrupt)
    return CheckResult("discriminator d_loss + lambda_d * J_D", error, MODEL_TOLERANCE, 1)


def _layer_check(
    name: str, specs: Sequence, input_shape, seed: int, corrupt: float
) -> CheckResult:
    rng = np.random.default_rng(seed)
    store = init(list(specs), seed, input_shape=input_shape)
    _randomize(store, rng, 0.5)
    x = rng.standard_normal((3,) + tuple(input_shape))
    weights = rng.standard_normal((3,) + store.output_shape)

    def objective() -> float:
        out, _ = forward(store, x)
        return float(np.sum(out * weights))

    store.zero_grad()
    _, cache = forward(store, x)
    backward(store, cache, weights)
    return CheckResult(name, _store_gradient_error(store, objective, corrupt), MODEL_TOLERANCE, 1)


def check_layers(seed: int = 3, corrupt: float = 0.0) -> List[CheckResult]:
    """Parameter gradients of small conv and transposed-conv stacks."""
    return [
        _layer_check(
            "conv 1x4x4 k3",
            [ConvSpec(1, 2, kernel=3, stride=1, padding=0), ActivationSpec("tanh"),
             ReshapeSpec((8,)), DenseSpec(8, 1)],
            (1, 4, 4),
            seed,
            corrupt,
        ),
        _layer_check(
            "conv_transpose 2x3x3 k4 s2",
            [ConvTransposeSpec(2, 3), ActivationSpec("tanh")],
            (2, 3, 3),
            seed + 1,
            corrupt,
        ),
    ]


def run_all(seed: int = 0, corrupt: float = 0.0) -> List[CheckResult]:
    """Every check `direal gradcheck` runs, in report order.

    `corrupt` scales analytic gradients by `1 + corrupt` to exercise failure
    reporting.
    """
    return [
        check_diversity(seed=seed, corrupt=corrupt),
        check_paper_factor(seed=seed + 1),
        check_discriminator(seed=seed + 2, corrupt=corrupt),
        *check_layers(seed=seed + 3, corrupt=corrupt),
    ]
