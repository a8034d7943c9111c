"""Little-endian binary checkpoints for parameter stores.

A store record is laid out as:

    [offset] [type]      [description]
    0000     8 bytes     magic b"DRLCKPT1"
    0008     uint32      layer count L
    0012     uint32      input rank R
    0016     R x uint32  input shape
    then, for each of the L layers:
             uint8       kind tag (see KIND_TAGS)
             uint32      dim count D
             D x uint32  dims
             float64[]   parameter and buffer arrays, in declaration order

Dims per kind: dense `(fan_in, fan_out)`; conv and conv_transpose
`(in, out, kernel, stride, padding)`; activation `(activation code,)`;
batchnorm `(num_features,)`; reshape the target shape.  Array sizes follow
from the dims.  A GAN checkpoint is the generator record immediately followed
by the discriminator record.
"""

import os
import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..errors import FormatError
from ..utils.invertable_dict import InvertableDict
from .layers import (
    ActivationSpec,
    BatchNormSpec,
    ConvSpec,
    ConvTransposeSpec,
    DenseSpec,
    LayerSpec,
    ReshapeSpec,
    build_layer,
)
from .model import ParamStore

__all__ = [
    "MAGIC",
    "encode_store",
    "decode_store",
    "save_checkpoint",
    "load_checkpoint",
]

MAGIC = b"DRLCKPT1"

KIND_TAGS: InvertableDict[str, int] = InvertableDict(
    {
        "dense": 1,
        "conv": 2,
        "conv_transpose": 3,
        "activation": 4,
        "batchnorm": 5,
        "reshape": 6,
    }
)

ACTIVATION_CODES: InvertableDict[str, int] = InvertableDict(
    {"relu": 0, "leaky_relu": 1, "tanh": 2, "sigmoid": 3, "identity": 4}
)


def _spec_dims(spec: LayerSpec) -> Tuple[int, ...]:
    if isinstance(spec, DenseSpec):
        return (spec.fan_in, spec.fan_out)
    if isinstance(spec, (ConvSpec, ConvTransposeSpec)):
        return (spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding)
    if isinstance(spec, ActivationSpec):
        return (ACTIVATION_CODES[spec.activation],)
    if isinstance(spec, BatchNormSpec):
        return (spec.num_features,)
    return tuple(spec.shape)


def _spec_from_dims(kind: str, dims: Tuple[int, ...]) -> LayerSpec:
    if kind == "dense":
        return DenseSpec(*dims)
    if kind == "conv":
        return ConvSpec(*dims)
    if kind == "conv_transpose":
        return ConvTransposeSpec(*dims)
    if kind == "activation":
        return ActivationSpec(ACTIVATION_CODES.lookup(dims[0]))  # type: ignore[arg-type]
    if kind == "batchnorm":
        return BatchNormSpec(*dims)
    return ReshapeSpec(shape=dims)


def encode_store(store: ParamStore) -> bytes:
    parts = [
        MAGIC,
        struct.pack("<II", len(store.layers), len(store.input_shape)),
        struct.pack(f"<{len(store.input_shape)}I", *store.input_shape),
    ]
    for layer in store.layers:
        dims = _spec_dims(layer.spec)
        parts.append(struct.pack("<BI", KIND_TAGS[layer.kind], len(dims)))
        parts.append(struct.pack(f"<{len(dims)}I", *dims))
        for array in list(layer.params.values()) + list(layer.buffers.values()):
            parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=self.offset)
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_store(data: bytes, offset: int = 0) -> Tuple[ParamStore, int]:
    """Parse one store record starting at `offset`; returns the store and the end offset."""
    reader = _Reader(data, offset)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError("bad checkpoint magic", offset=offset)

    n_layers, rank = reader.unpack("<II", "header")
    input_shape = reader.unpack(f"<{rank}I", "input shape")

    layers = []
    for i in range(n_layers):
        tag_offset = reader.offset
        tag, n_dims = reader.unpack("<BI", f"layer {i} header")
        try:
            kind = KIND_TAGS.lookup(tag)
        except KeyError:
            raise FormatError(f"unknown layer kind tag {tag}", offset=tag_offset) from None
        dims = reader.unpack(f"<{n_dims}I", f"layer {i} dims")
        try:
            layer = build_layer(_spec_from_dims(kind, dims))
        except (TypeError, ValueError, KeyError) as e:
            raise FormatError(f"invalid dims {dims} for {kind} layer: {e}", offset=tag_offset) from e

        arrays = list(layer.params.items()) + list(layer.buffers.items())
        for name, array in arrays:
            raw = reader.take(array.size * 8, f"layer {i} `{name}`")
            array[...] = np.frombuffer(raw, dtype="<f8").reshape(array.shape)
        layers.append(layer)

    try:
        store = ParamStore(layers, input_shape)
    except ValueError as e:
        raise FormatError(f"inconsistent layer stack: {e}", offset=offset) from e
    return store, reader.offset


def save_checkpoint(
    path: Union[str, Path], generator: ParamStore, discriminator: ParamStore
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_store(generator) + encode_store(discriminator))
    os.replace(tmp, path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[ParamStore, ParamStore]:
    data = Path(path).read_bytes()
    stores: List[ParamStore] = []
    offset = 0
    for _ in range(2):
        store, offset = decode_store(data, offset)
        stores.append(store)
    if offset != len(data):
        raise FormatError("trailing bytes after discriminator record", offset=offset)
    return stores[0], stores[1]
