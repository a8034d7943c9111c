"""Minimal feed-forward network engine with manual backpropagation."""

from .checkpoint import decode_store, encode_store, load_checkpoint, save_checkpoint
from .conditioning import power_iteration, spectral_normalize, weight_clip
from .layers import (
    ActivationSpec,
    BatchNormSpec,
    ConvSpec,
    ConvTransposeSpec,
    DenseSpec,
    LayerSpec,
    ReshapeSpec,
    WeightLayer,
)
from .model import ForwardCache, ParamStore, backward, forward, init
from .optim import AdamState, adam_step

__all__ = [
    "ActivationSpec",
    "AdamState",
    "BatchNormSpec",
    "ConvSpec",
    "ConvTransposeSpec",
    "DenseSpec",
    "ForwardCache",
    "LayerSpec",
    "ParamStore",
    "ReshapeSpec",
    "WeightLayer",
    "adam_step",
    "backward",
    "decode_store",
    "encode_store",
    "forward",
    "init",
    "load_checkpoint",
    "power_iteration",
    "save_checkpoint",
    "spectral_normalize",
    "weight_clip",
]
