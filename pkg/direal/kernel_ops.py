"""Conversion between layer weight tensors and kernel matrices.

A kernel matrix holds one column per output filter of a layer.  Each column is
the filter flattened in (input-channel, kernel-row, kernel-col) order, so a conv
layer with `n_in` input channels and a `k x k` kernel yields `m = k*k*n_in` rows.
Dense weights are stored `(fan_in, fan_out)` and are already in this form.

```python
from direal.kernel_ops import LayerShape, unroll, fold

shape = LayerShape.conv(in_channels=2, out_channels=4, kernel=3)
km = unroll(weights, shape)  # 18 x 4
weights_again = fold(km.values, shape)
```

Biases never enter a kernel matrix.
"""

from dataclasses import dataclass as value_dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import ConfigDict, PositiveInt, model_validator
from pydantic.dataclasses import dataclass

from .errors import ShapeError

__all__ = ["EPS", "LayerShape", "KernelMatrix", "unroll", "fold", "normalize_columns"]

EPS = 1e-12
"Columns with Euclidean norm at or below this are treated as degenerate."

dataclass_config = ConfigDict(validate_assignment=True, extra="forbid")

LayerKind = Literal["dense", "conv", "conv_transpose"]


@dataclass(config=dataclass_config, frozen=True)
class LayerShape:
    """Geometry of a weight-bearing layer.

    Attributes:
        kind (Literal["dense", "conv", "conv_transpose"]): The layer family.
        fan_in (Optional[int]): Dense only, number of inputs.
        fan_out (Optional[int]): Dense only, number of outputs.
        in_channels (Optional[int]): Conv kinds only, input channels `n_l`.
        out_channels (Optional[int]): Conv kinds only, output channels `n_{l+1}`.
        kernel (Optional[int]): Conv kinds only, square kernel size `k`.
    """

    kind: LayerKind
    fan_in: Optional[PositiveInt] = None
    fan_out: Optional[PositiveInt] = None
    in_channels: Optional[PositiveInt] = None
    out_channels: Optional[PositiveInt] = None
    kernel: Optional[PositiveInt] = None

    @model_validator(mode="after")
    def _check_fields(self):
        if self.kind == "dense":
            if self.fan_in is None or self.fan_out is None:
                raise ValueError("dense shapes need `fan_in` and `fan_out`")
        elif None in (self.in_channels, self.out_channels, self.kernel):
            raise ValueError(
                f"{self.kind} shapes need `in_channels`, `out_channels` and `kernel`"
            )
        return self

    @classmethod
    def dense(cls, fan_in: int, fan_out: int) -> "LayerShape":
        return cls(kind="dense", fan_in=fan_in, fan_out=fan_out)

    @classmethod
    def conv(cls, in_channels: int, out_channels: int, kernel: int) -> "LayerShape":
        return cls(
            kind="conv", in_channels=in_channels, out_channels=out_channels, kernel=kernel
        )

    @classmethod
    def conv_transpose(
        cls, in_channels: int, out_channels: int, kernel: int
    ) -> "LayerShape":
        return cls(
            kind="conv_transpose",
            in_channels=in_channels,
            out_channels=out_channels,
            kernel=kernel,
        )

    @property
    def m(self) -> int:
        "Rows of the kernel matrix (length of one flattened filter)."
        if self.kind == "dense":
            return int(self.fan_in)  # type: ignore[arg-type]
        return int(self.kernel) ** 2 * int(self.in_channels)  # type: ignore[operator]

    @property
    def n(self) -> int:
        "Columns of the kernel matrix (number of output filters)."
        if self.kind == "dense":
            return int(self.fan_out)  # type: ignore[arg-type]
        return int(self.out_channels)  # type: ignore[arg-type]

    @property
    def weight_shape(self) -> Tuple[int, ...]:
        "Shape of the weight tensor stored by the layer."
        if self.kind == "dense":
            return (self.m, self.n)
        k = int(self.kernel)  # type: ignore[arg-type]
        c_in, c_out = int(self.in_channels), int(self.out_channels)  # type: ignore[arg-type]
        if self.kind == "conv":
            return (c_out, c_in, k, k)
        return (c_in, c_out, k, k)


@value_dataclass(eq=False, frozen=True)
class KernelMatrix:
    """A layer's filters as the columns of an `m x n` matrix.

    `column_norms` always holds the norms of the raw (unnormalized) columns.
    """

    values: np.ndarray
    column_norms: np.ndarray
    normalized: bool = False

    @classmethod
    def from_columns(cls, values: np.ndarray) -> "KernelMatrix":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or 0 in values.shape:
            raise ShapeError(f"Kernel matrix must be a non-empty 2-D array, got {values.shape}")
        return cls(values=values, column_norms=np.linalg.norm(values, axis=0))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def degenerate(self) -> np.ndarray:
        "Boolean mask of columns whose raw norm is at or below `EPS`."
        return self.column_norms <= EPS


def _check_shape(actual: Tuple[int, ...], expected: Tuple[int, ...], what: str) -> None:
    if tuple(actual) != tuple(expected):
        raise ShapeError(f"{what} has shape {tuple(actual)}, expected {tuple(expected)}")


def unroll(weights: np.ndarray, shape: LayerShape) -> KernelMatrix:
    weights = np.asarray(weights, dtype=np.float64)
    _check_shape(weights.shape, shape.weight_shape, f"{shape.kind} weight tensor")

    if shape.kind == "dense":
        values = weights.copy()
    elif shape.kind == "conv":
        values = weights.reshape(shape.n, shape.m).T
    else:
        values = weights.transpose(1, 0, 2, 3).reshape(shape.n, shape.m).T

    return KernelMatrix.from_columns(np.ascontiguousarray(values))


def fold(grad: np.ndarray, shape: LayerShape) -> np.ndarray:
    grad = np.asarray(grad, dtype=np.float64)
    _check_shape(grad.shape, (shape.m, shape.n), "kernel matrix")

    if shape.kind == "dense":
        return grad.copy()

    k = int(shape.kernel)  # type: ignore[arg-type]
    c_in, c_out = int(shape.in_channels), int(shape.out_channels)  # type: ignore[arg-type]
    tensor = grad.T.reshape(c_out, c_in, k, k)
    if shape.kind == "conv_transpose":
        tensor = tensor.transpose(1, 0, 2, 3)
    return np.ascontiguousarray(tensor)


def normalize_columns(km: KernelMatrix) -> KernelMatrix:
    if km.normalized:
        return km

    norms = km.column_norms
    safe = norms > EPS
    values = np.zeros_like(km.values)
    np.divide(km.values, norms, out=values, where=safe[np.newaxis, :])
    return KernelMatrix(values=values, column_norms=norms.copy(), normalized=True)
