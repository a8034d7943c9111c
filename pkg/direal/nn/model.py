from dataclasses import dataclass as value_dataclass
from typing import Any, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, ShapeError, UsageError
from .layers import (
    ConvSpec,
    ConvTransposeSpec,
    DenseSpec,
    Layer,
    LayerSpec,
    WeightLayer,
    build_layer,
)

__all__ = ["INIT_STD", "ParamStore", "ForwardCache", "init", "forward", "backward"]

INIT_STD = 0.02


class ParamStore:
    """An ordered stack of layers with their parameters and gradient buffers.

    `version` increases every time parameters change through an optimizer
    step, so caches produced before an update can be detected as stale.
    """

    def __init__(self, layers: List[Layer], input_shape: Tuple[int, ...]):
        self.layers = layers
        self.input_shape = tuple(int(d) for d in input_shape)
        self.version = 0

        shape = self.input_shape
        for i, layer in enumerate(layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as e:
                raise ConfigurationError(f"layer {i} ({layer.kind}): {e}") from e
        self.output_shape = shape

    @property
    def specs(self) -> List[LayerSpec]:
        return [layer.spec for layer in self.layers]

    def weight_layer_indices(self) -> List[int]:
        "Positions (in `layers`) of the dense/conv/conv_transpose layers."
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, WeightLayer)]

    def weight_layers(self) -> List[WeightLayer]:
        return [self.layers[i] for i in self.weight_layer_indices()]  # type: ignore[misc]

    def named_parameters(self) -> Iterator[Tuple[str, np.ndarray, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, param in layer.params.items():
                yield f"{i}.{name}", param, layer.grads[name]

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def copy(self) -> "ParamStore":
        clone = ParamStore([build_layer(spec) for spec in self.specs], self.input_shape)
        for src, dst in zip(self.layers, clone.layers):
            for name, value in src.params.items():
                dst.params[name][...] = value
            for name, value in src.buffers.items():
                dst.buffers[name] = value.copy()
        return clone


@value_dataclass(eq=False, frozen=True)
class ForwardCache:
    layer_caches: List[Any]
    version: int
    train: bool


def _input_shape_for(spec: LayerSpec) -> Optional[Tuple[int, ...]]:
    if isinstance(spec, DenseSpec):
        return (spec.fan_in,)
    return None


def init(
    specs: Sequence[LayerSpec],
    seed: int,
    input_shape: Optional[Tuple[int, ...]] = None,
) -> ParamStore:
    """Build a store from layer specs with DCGAN-style initialization.

    Weights are drawn from Normal(0, 0.02) in layer order, biases and batchnorm
    shifts start at 0, batchnorm scales and running variances at 1.  For
    stacks that start with a conv layer, `input_shape` must give `(C, H, W)`.
    """
    if not specs:
        raise ConfigurationError("a model needs at least one layer")
    if input_shape is None:
        input_shape = _input_shape_for(specs[0])
        if input_shape is None:
            raise ConfigurationError(
                f"`input_shape` is required when the first layer is {specs[0].kind}"
            )
    if isinstance(specs[0], (ConvSpec, ConvTransposeSpec)) and len(input_shape) != 3:
        raise ConfigurationError(f"conv input shape must be (C, H, W), got {input_shape}")

    rng = np.random.default_rng(seed)
    layers = [build_layer(spec) for spec in specs]
    for layer in layers:
        if isinstance(layer, WeightLayer):
            layer.params["weight"][...] = INIT_STD * rng.standard_normal(layer.weight.shape)
    return ParamStore(layers, input_shape)


def forward(
    model: ParamStore, batch: np.ndarray, train: bool = True
) -> Tuple[np.ndarray, ForwardCache]:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim < 2 or tuple(batch.shape[1:]) != model.input_shape:
        raise ShapeError(
            f"batch of shape {batch.shape} does not match model input (N,) + {model.input_shape}"
        )

    caches = []
    out = batch
    for layer in model.layers:
        out, cache = layer.forward(out, train)
        caches.append(cache)
    return out, ForwardCache(layer_caches=caches, version=model.version, train=train)


def backward(model: ParamStore, cache: ForwardCache, output_grad: np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients into the store; returns the input gradient."""
    if cache.version != model.version:
        raise UsageError(
            f"stale forward cache (version {cache.version}, model is at {model.version})"
        )
    if len(cache.layer_caches) != len(model.layers):
        raise UsageError("forward cache does not belong to this model")

    grad = np.asarray(output_grad, dtype=np.float64)
    for layer, layer_cache in zip(reversed(model.layers), reversed(cache.layer_caches)):
        grad = layer.backward(grad, layer_cache)
    return grad
