"""Adversarial losses on discriminator probabilities.

Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
Gradients are with respect to the unclamped probabilities and vanish where
the clamp is active.
"""

from typing import Tuple

import numpy as np

from .interface import GeneratorLoss

__all__ = ["PROB_CLAMP", "d_loss", "d_loss_grad", "g_loss", "g_loss_grad"]

PROB_CLAMP = 1e-7


def _clamped(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    clamped = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return clamped, (clamped == p).astype(np.float64)


def d_loss(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    "`-mean(log D(x)) - mean(log(1 - D(G(z))))`."
    real, _ = _clamped(d_real)
    fake, _ = _clamped(d_fake)
    return float(-np.mean(np.log(real)) - np.mean(np.log1p(-fake)))


def d_loss_grad(d_real: np.ndarray, d_fake: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    real, real_live = _clamped(d_real)
    fake, fake_live = _clamped(d_fake)
    grad_real = -real_live / (real.size * real)
    grad_fake = fake_live / (fake.size * (1.0 - fake))
    return grad_real, grad_fake


def g_loss(d_fake: np.ndarray, mode: GeneratorLoss = "non_saturating") -> float:
    """Generator objective.

    `saturating` is `mean(log(1 - D(G(z))))`; `non_saturating` is
    `-mean(log D(G(z)))`.  Both are minimized as D(G(z)) approaches 1.
    """
    fake, _ = _clamped(d_fake)
    if mode == "saturating":
        return float(np.mean(np.log1p(-fake)))
    return float(-np.mean(np.log(fake)))


def g_loss_grad(d_fake: np.ndarray, mode: GeneratorLoss = "non_saturating") -> np.ndarray:
    fake, live = _clamped(d_fake)
    if mode == "saturating":
        return -live / (fake.size * (1.0 - fake))
    return -live / (fake.size * fake)
