"""Layer specifications and their manually differentiated implementations.

Every layer exposes `forward(x, train) -> (out, cache)` and
`backward(dout, cache) -> dx`.  Parameter gradients are accumulated into
`layer.grads`, which mirror `layer.params` key for key.

Tensors are float64.  Dense inputs are `(N, features)`, conv inputs are
`(N, C, H, W)`.
"""

from typing import Any, ClassVar, Dict, Literal, Optional, Tuple, Type, Union

import numpy as np
from annotated_types import Annotated, Ge, Gt, Lt
from pydantic import ConfigDict, PositiveInt
from pydantic.dataclasses import dataclass

from ..errors import ShapeError
from ..kernel_ops import LayerShape

__all__ = [
    "DenseSpec",
    "ConvSpec",
    "ConvTransposeSpec",
    "ActivationSpec",
    "BatchNormSpec",
    "ReshapeSpec",
    "LayerSpec",
    "Layer",
    "build_layer",
    "im2col",
    "col2im",
]

dataclass_config = ConfigDict(validate_assignment=True, extra="forbid")

ActivationKind = Literal["relu", "leaky_relu", "tanh", "sigmoid", "identity"]
LEAKY_SLOPE = 0.2


@dataclass(config=dataclass_config, frozen=True)
class DenseSpec:
    """Fully connected layer, `y = x @ W + b` with `W` of shape `(fan_in, fan_out)`."""

    fan_in: PositiveInt
    fan_out: PositiveInt
    kind: ClassVar[str] = "dense"


@dataclass(config=dataclass_config, frozen=True)
class ConvSpec:
    """Strided 2-D convolution, weights `(out_channels, in_channels, k, k)`."""

    in_channels: PositiveInt
    out_channels: PositiveInt
    kernel: PositiveInt = 4
    stride: PositiveInt = 2
    padding: Annotated[int, Ge(0)] = 1
    kind: ClassVar[str] = "conv"


@dataclass(config=dataclass_config, frozen=True)
class ConvTransposeSpec:
    """Transposed 2-D convolution used for generator upsampling.

    Weights are `(in_channels, out_channels, k, k)` and the output size is
    `(H - 1) * stride - 2 * padding + kernel`.
    """

    in_channels: PositiveInt
    out_channels: PositiveInt
    kernel: PositiveInt = 4
    stride: PositiveInt = 2
    padding: Annotated[int, Ge(0)] = 1
    kind: ClassVar[str] = "conv_transpose"


@dataclass(config=dataclass_config, frozen=True)
class ActivationSpec:
    activation: ActivationKind
    kind: ClassVar[str] = "activation"


@dataclass(config=dataclass_config, frozen=True)
class BatchNormSpec:
    """Batch normalization over the channel axis.

    Attributes:
        num_features (int): Features (dense input) or channels (conv input).
        momentum (float): Weight of the old running statistics per update.
        eps (float): Added to the variance before the square root.
    """

    num_features: PositiveInt
    momentum: Annotated[float, Ge(0), Lt(1)] = 0.9
    eps: Annotated[float, Gt(0)] = 1e-5
    kind: ClassVar[str] = "batchnorm"


@dataclass(config=dataclass_config, frozen=True)
class ReshapeSpec:
    """Reshape every sample to `shape` (the batch axis is kept)."""

    shape: Tuple[PositiveInt, ...]
    kind: ClassVar[str] = "reshape"


LayerSpec = Union[
    DenseSpec, ConvSpec, ConvTransposeSpec, ActivationSpec, BatchNormSpec, ReshapeSpec
]


def im2col(
    images: np.ndarray, filter_h: int, filter_w: int, stride: int = 1, pad: int = 0
) -> np.ndarray:
    """Expand `(N, C, H, W)` images into `(N*out_h*out_w, C*filter_h*filter_w)` patches.

    Patch columns are ordered (channel, kernel-row, kernel-col), the same order
    `kernel_ops.unroll` uses for filters.
    """
    N, C, H, W = images.shape
    out_h = (H + 2 * pad - filter_h) // stride + 1
    out_w = (W + 2 * pad - filter_w) // stride + 1

    padded = np.pad(images, [(0, 0), (0, 0), (pad, pad), (pad, pad)], mode="constant")
    col = np.zeros((N, C, filter_h, filter_w, out_h, out_w))
    for y in range(filter_h):
        y_max = y + stride * out_h
        for x in range(filter_w):
            x_max = x + stride * out_w
            col[:, :, y, x, :, :] = padded[:, :, y:y_max:stride, x:x_max:stride]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(N * out_h * out_w, -1)


def col2im(
    col: np.ndarray,
    input_shape: Tuple[int, int, int, int],
    filter_h: int,
    filter_w: int,
    stride: int = 1,
    pad: int = 0,
) -> np.ndarray:
    """Adjoint of `im2col`: scatter-add patches back into `(N, C, H, W)`."""
    N, C, H, W = input_shape
    out_h = (H + 2 * pad - filter_h) // stride + 1
    out_w = (W + 2 * pad - filter_w) // stride + 1
    col = col.reshape(N, out_h, out_w, C, filter_h, filter_w).transpose(0, 3, 4, 5, 1, 2)

    img = np.zeros((N, C, H + 2 * pad, W + 2 * pad))
    for y in range(filter_h):
        y_max = y + stride * out_h
        for x in range(filter_w):
            x_max = x + stride * out_w
            img[:, :, y:y_max:stride, x:x_max:stride] += col[:, :, y, x, :, :]
    return img[:, :, pad : H + pad, pad : W + pad]


class Layer:
    """Base class for runtime layers."""

    spec: Any

    def __init__(self, spec):
        self.spec = spec
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def shape(self) -> Optional[LayerShape]:
        "Kernel geometry for weight-bearing layers, `None` otherwise."
        return None

    def _add_param(self, name: str, value: np.ndarray) -> None:
        self.params[name] = np.asarray(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.params[name])

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def output_shape(self, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return in_shape

    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(self, dout: np.ndarray, cache: Any) -> np.ndarray:
        raise NotImplementedError


class WeightLayer(Layer):
    """A layer with a `weight` tensor that can be unrolled into a kernel matrix."""

    def __init__(self, spec):
        super().__init__(spec)
        # power-iteration vector for spectral normalization, kept across steps
        self.sn_u: Optional[np.ndarray] = None

    @property
    def weight(self) -> np.ndarray:
        return self.params["weight"]

    @property
    def weight_grad(self) -> np.ndarray:
        return self.grads["weight"]


class Dense(WeightLayer):
    def __init__(self, spec: DenseSpec):
        super().__init__(spec)
        self._add_param("weight", np.zeros((spec.fan_in, spec.fan_out)))
        self._add_param("bias", np.zeros(spec.fan_out))

    @property
    def shape(self) -> LayerShape:
        return LayerShape.dense(self.spec.fan_in, self.spec.fan_out)

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.spec.fan_in,):
            raise ShapeError(f"dense layer expects ({self.spec.fan_in},) inputs, got {in_shape}")
        return (self.spec.fan_out,)

    def forward(self, x, train):
        return x @ self.weight + self.params["bias"], x

    def backward(self, dout, cache):
        x = cache
        self.grads["weight"] += x.T @ dout
        self.grads["bias"] += dout.sum(axis=0)
        return dout @ self.weight.T


class Conv2d(WeightLayer):
    def __init__(self, spec: ConvSpec):
        super().__init__(spec)
        k = spec.kernel
        self._add_param("weight", np.zeros((spec.out_channels, spec.in_channels, k, k)))
        self._add_param("bias", np.zeros(spec.out_channels))

    @property
    def shape(self) -> LayerShape:
        return LayerShape.conv(self.spec.in_channels, self.spec.out_channels, self.spec.kernel)

    def output_shape(self, in_shape):
        s = self.spec
        if len(in_shape) != 3 or in_shape[0] != s.in_channels:
            raise ShapeError(f"conv layer expects ({s.in_channels}, H, W) inputs, got {in_shape}")
        _, H, W = in_shape
        out_h = (H + 2 * s.padding - s.kernel) // s.stride + 1
        out_w = (W + 2 * s.padding - s.kernel) // s.stride + 1
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"conv layer input {in_shape} is smaller than its kernel")
        return (s.out_channels, out_h, out_w)

    def forward(self, x, train):
        s = self.spec
        N = x.shape[0]
        _, out_h, out_w = self.output_shape(x.shape[1:])
        col = im2col(x, s.kernel, s.kernel, s.stride, s.padding)
        w_col = self.weight.reshape(s.out_channels, -1)
        out = col @ w_col.T + self.params["bias"]
        out = out.reshape(N, out_h, out_w, s.out_channels).transpose(0, 3, 1, 2)
        return out, (x.shape, col)

    def backward(self, dout, cache):
        s = self.spec
        x_shape, col = cache
        dout_r = dout.transpose(0, 2, 3, 1).reshape(-1, s.out_channels)
        self.grads["weight"] += (dout_r.T @ col).reshape(self.weight.shape)
        self.grads["bias"] += dout_r.sum(axis=0)
        dcol = dout_r @ self.weight.reshape(s.out_channels, -1)
        return col2im(dcol, x_shape, s.kernel, s.kernel, s.stride, s.padding)


class ConvTranspose2d(WeightLayer):
    def __init__(self, spec: ConvTransposeSpec):
        super().__init__(spec)
        k = spec.kernel
        self._add_param("weight", np.zeros((spec.in_channels, spec.out_channels, k, k)))
        self._add_param("bias", np.zeros(spec.out_channels))

    @property
    def shape(self) -> LayerShape:
        s = self.spec
        return LayerShape.conv_transpose(s.in_channels, s.out_channels, s.kernel)

    def output_shape(self, in_shape):
        s = self.spec
        if len(in_shape) != 3 or in_shape[0] != s.in_channels:
            raise ShapeError(
                f"conv_transpose layer expects ({s.in_channels}, H, W) inputs, got {in_shape}"
            )
        _, H, W = in_shape
        out_h = (H - 1) * s.stride - 2 * s.padding + s.kernel
        out_w = (W - 1) * s.stride - 2 * s.padding + s.kernel
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"conv_transpose layer produces an empty output for {in_shape}")
        return (s.out_channels, out_h, out_w)

    def forward(self, x, train):
        s = self.spec
        N, _, H, W = x.shape
        out_shape = (N,) + self.output_shape(x.shape[1:])
        x_r = x.transpose(0, 2, 3, 1).reshape(N * H * W, s.in_channels)
        w_mat = self.weight.reshape(s.in_channels, -1)
        out = col2im(x_r @ w_mat, out_shape, s.kernel, s.kernel, s.stride, s.padding)
        out = out + self.params["bias"].reshape(1, -1, 1, 1)
        return out, (x.shape, x_r)

    def backward(self, dout, cache):
        s = self.spec
        (N, _, H, W), x_r = cache
        dcol = im2col(dout, s.kernel, s.kernel, s.stride, s.padding)
        w_mat = self.weight.reshape(s.in_channels, -1)
        self.grads["weight"] += (x_r.T @ dcol).reshape(self.weight.shape)
        self.grads["bias"] += dout.sum(axis=(0, 2, 3))
        dx_r = dcol @ w_mat.T
        return dx_r.reshape(N, H, W, s.in_channels).transpose(0, 3, 1, 2)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


class Activation(Layer):
    def forward(self, x, train):
        kind = self.spec.activation
        if kind == "relu":
            out = np.maximum(x, 0.0)
        elif kind == "leaky_relu":
            out = np.where(x > 0, x, LEAKY_SLOPE * x)
        elif kind == "tanh":
            out = np.tanh(x)
        elif kind == "sigmoid":
            out = _sigmoid(x)
        else:
            out = x
        return out, (x, out)

    def backward(self, dout, cache):
        x, out = cache
        kind = self.spec.activation
        if kind == "relu":
            return dout * (x > 0)
        if kind == "leaky_relu":
            return np.where(x > 0, dout, LEAKY_SLOPE * dout)
        if kind == "tanh":
            return dout * (1.0 - out * out)
        if kind == "sigmoid":
            return dout * out * (1.0 - out)
        return dout


class BatchNorm(Layer):
    """Normalizes over the batch (and spatial axes for conv inputs) per channel."""

    def __init__(self, spec: BatchNormSpec):
        super().__init__(spec)
        c = spec.num_features
        self._add_param("gamma", np.ones(c))
        self._add_param("beta", np.zeros(c))
        self.buffers["running_mean"] = np.zeros(c)
        self.buffers["running_var"] = np.ones(c)

    def output_shape(self, in_shape):
        if in_shape[0] != self.spec.num_features:
            raise ShapeError(
                f"batchnorm expects {self.spec.num_features} channels, got shape {in_shape}"
            )
        return in_shape

    @staticmethod
    def _axes(x: np.ndarray) -> Tuple[int, ...]:
        return (0,) if x.ndim == 2 else (0, 2, 3)

    @staticmethod
    def _bcast(v: np.ndarray, ndim: int) -> np.ndarray:
        return v if ndim == 2 else v.reshape(1, -1, 1, 1)

    def forward(self, x, train):
        axes = self._axes(x)
        gamma = self._bcast(self.params["gamma"], x.ndim)
        beta = self._bcast(self.params["beta"], x.ndim)

        if train:
            count = x.size // x.shape[1]
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            mom = self.spec.momentum
            unbiased = var * count / (count - 1) if count > 1 else var
            self.buffers["running_mean"] = mom * self.buffers["running_mean"] + (1 - mom) * mean
            self.buffers["running_var"] = mom * self.buffers["running_var"] + (1 - mom) * unbiased
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]

        inv_std = 1.0 / np.sqrt(var + self.spec.eps)
        x_hat = (x - self._bcast(mean, x.ndim)) * self._bcast(inv_std, x.ndim)
        return gamma * x_hat + beta, (x_hat, inv_std, train)

    def backward(self, dout, cache):
        x_hat, inv_std, train = cache
        axes = self._axes(dout)
        ndim = dout.ndim
        self.grads["gamma"] += (dout * x_hat).sum(axis=axes)
        self.grads["beta"] += dout.sum(axis=axes)

        dx_hat = dout * self._bcast(self.params["gamma"], ndim)
        if not train:
            return dx_hat * self._bcast(inv_std, ndim)

        count = dout.size // dout.shape[1]
        sum_dx_hat = self._bcast(dx_hat.sum(axis=axes), ndim)
        sum_dx_hat_x_hat = self._bcast((dx_hat * x_hat).sum(axis=axes), ndim)
        return (
            self._bcast(inv_std, ndim)
            / count
            * (count * dx_hat - sum_dx_hat - x_hat * sum_dx_hat_x_hat)
        )


class Reshape(Layer):
    def output_shape(self, in_shape):
        target = tuple(self.spec.shape)
        if int(np.prod(in_shape)) != int(np.prod(target)):
            raise ShapeError(f"cannot reshape {in_shape} into {target}")
        return target

    def forward(self, x, train):
        return x.reshape((x.shape[0],) + tuple(self.spec.shape)), x.shape

    def backward(self, dout, cache):
        return dout.reshape(cache)


LAYER_TYPES: Dict[Type, Type[Layer]] = {
    DenseSpec: Dense,
    ConvSpec: Conv2d,
    ConvTransposeSpec: ConvTranspose2d,
    ActivationSpec: Activation,
    BatchNormSpec: BatchNorm,
    ReshapeSpec: Reshape,
}


def build_layer(spec: LayerSpec) -> Layer:
    cls = LAYER_TYPES.get(spec.__class__)
    if cls is None:
        raise TypeError(f"Unknown layer spec: {spec.__class__}")
    return cls(spec)
