from .interface import (
    HISTORY_COLUMNS,
    REGULARIZER_MODES,
    GanModel,
    MetricsRecord,
    TrainConfig,
    regularizer_parts,
)
from .loop import TrainResult, build_gan, history_columns, sample, train, train_step
from .losses import PROB_CLAMP, d_loss, d_loss_grad, g_loss, g_loss_grad

__all__ = [
    "HISTORY_COLUMNS",
    "PROB_CLAMP",
    "REGULARIZER_MODES",
    "GanModel",
    "MetricsRecord",
    "TrainConfig",
    "TrainResult",
    "build_gan",
    "d_loss",
    "d_loss_grad",
    "g_loss",
    "g_loss_grad",
    "history_columns",
    "regularizer_parts",
    "sample",
    "train",
    "train_step",
]
