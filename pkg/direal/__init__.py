"""Masked Gram-matrix diversity regularization for GAN training."""

import os
from typing import Optional


def _thread_cap(raw: Optional[str]) -> Optional[str]:
    "BLAS thread count from `DIREAL_THREADS`; 0 means single-threaded."
    if raw is None or not raw.strip():
        return None
    try:
        return str(max(1, int(raw)))
    except ValueError:
        import wandb  # may load numpy

        wandb.termwarn(f"Ignoring DIREAL_THREADS={raw!r}: expected an integer")
        return None


# Must run before numpy loads its BLAS.
_cap = _thread_cap(os.getenv("DIREAL_THREADS"))
if _cap is not None:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _cap)

from .data import Dataset, gaussian_ring, grid25, load_idx  # noqa: E402
from .diversity import (  # noqa: E402
    BinaryMask,
    DiversityConfig,
    GramMatrix,
    apply_diversity,
    diversity_grad_exact,
    diversity_grad_paper,
    diversity_loss,
    gram,
    layer_diversity,
    mask,
    selected_layers,
)
from .errors import (  # noqa: E402
    ConfigurationError,
    DirealError,
    FormatError,
    NonFiniteLossError,
    ShapeError,
    UsageError,
)
from .kernel_ops import KernelMatrix, LayerShape, fold, normalize_columns, unroll  # noqa: E402
from .metrics import (  # noqa: E402
    ModeSpec,
    ScoreSample,
    cosine_stats,
    mode_coverage,
    wasserstein1d,
    window_divergence,
)
from .train import TrainConfig, sample, train, train_step  # noqa: E402

__all__ = [
    "BinaryMask",
    "ConfigurationError",
    "Dataset",
    "DiversityConfig",
    "DirealError",
    "FormatError",
    "GramMatrix",
    "KernelMatrix",
    "LayerShape",
    "ModeSpec",
    "NonFiniteLossError",
    "ScoreSample",
    "ShapeError",
    "TrainConfig",
    "UsageError",
    "apply_diversity",
    "cosine_stats",
    "diversity_grad_exact",
    "diversity_grad_paper",
    "diversity_loss",
    "fold",
    "gaussian_ring",
    "gram",
    "grid25",
    "layer_diversity",
    "load_idx",
    "mask",
    "mode_coverage",
    "normalize_columns",
    "sample",
    "selected_layers",
    "train",
    "train_step",
    "unroll",
    "wasserstein1d",
    "window_divergence",
]
