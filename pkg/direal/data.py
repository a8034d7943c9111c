"""Datasets: synthetic 2-D mixtures and IDX grayscale images.

Loaders are deterministic in their arguments.  Shuffling belongs to the
training loop.
"""

import gzip
import struct
from dataclasses import dataclass as value_dataclass
from pathlib import Path
from typing import Literal, Optional, Tuple, Union

import numpy as np

from .errors import FormatError, UsageError
from .metrics import ModeSpec

__all__ = [
    "IDX_IMAGES_MAGIC",
    "IDX_LABELS_MAGIC",
    "Dataset",
    "ring_centers",
    "grid_centers",
    "gaussian_ring",
    "grid25",
    "load_idx",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DatasetKind = Literal["ring", "grid", "idx_images"]


@value_dataclass(eq=False, frozen=True)
class Dataset:
    """A non-empty stack of items sharing `item_shape`.

    Attributes:
        kind: Where the items came from.
        items: Array of shape `(n,) + item_shape`.
        modes: Mixture centers and spread for synthetic 2-D data.
        labels: Optional integer labels for IDX data.
    """

    kind: DatasetKind
    items: np.ndarray
    modes: Optional[ModeSpec] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.items) == 0:
            raise UsageError("datasets must be non-empty")

    @property
    def item_shape(self) -> Tuple[int, ...]:
        return tuple(self.items.shape[1:])

    def __len__(self) -> int:
        return len(self.items)


def ring_centers(n_modes: int, radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(n_modes) / n_modes
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def grid_centers(spacing: float, side: int = 5) -> np.ndarray:
    offsets = (np.arange(side) - (side - 1) / 2.0) * spacing
    xs, ys = np.meshgrid(offsets, offsets, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def _mixture(centers: np.ndarray, sigma: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    idx = rng.integers(len(centers), size=n)
    return centers[idx] + sigma * rng.standard_normal((n, 2))


def gaussian_ring(
    n_modes: int = 8, radius: float = 2.0, sigma: float = 0.05, n: int = 8192, seed: int = 0
) -> Dataset:
    """Isotropic Gaussians equally spaced on a circle, each picked uniformly."""
    if n_modes < 2:
        raise UsageError(f"a ring needs at least 2 modes, got {n_modes}")
    if not sigma > 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")

    centers = ring_centers(n_modes, radius)
    return Dataset(
        kind="ring",
        items=_mixture(centers, sigma, n, seed),
        modes=ModeSpec(centers=centers, sigma=sigma),
    )


def grid25(spacing: float = 2.0, sigma: float = 0.05, n: int = 8192, seed: int = 0) -> Dataset:
    """Isotropic Gaussians on a 5x5 lattice centered at the origin."""
    if not spacing > 0:
        raise UsageError(f"spacing must be positive, got {spacing}")
    if not sigma > 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")

    centers = grid_centers(spacing)
    return Dataset(
        kind="grid",
        items=_mixture(centers, sigma, n, seed),
        modes=ModeSpec(centers=centers, sigma=sigma),
    )


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _parse_idx(data: bytes, magic: int, what: str) -> np.ndarray:
    # Data format (big endian):
    # u32  | magic, 0x0000 then type code 0x08 (ubyte) then rank
    # u32  | size of each dimension, `rank` times
    # u8[] | values, last dimension fastest
    if len(data) < 4:
        raise FormatError(f"truncated {what} file header", offset=len(data))
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise FormatError(f"bad {what} magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)

    rank = magic & 0xFF
    header_end = 4 + 4 * rank
    if len(data) < header_end:
        raise FormatError(f"truncated {what} dimension sizes", offset=len(data))
    dims = struct.unpack(f">{rank}I", data[4:header_end])

    expected = int(np.prod(dims))
    available = len(data) - header_end
    if available < expected:
        raise FormatError(
            f"truncated {what} payload, expected {expected} bytes, found {available}",
            offset=len(data),
        )
    if available > expected:
        raise FormatError(f"trailing bytes after {what} payload", offset=header_end + expected)
    return np.frombuffer(data, dtype=np.uint8, count=expected, offset=header_end).reshape(dims)


def load_idx(
    images_path: Union[str, Path], labels_path: Union[str, Path, None] = None
) -> Dataset:
    """Load big-endian IDX images (and optionally labels).

    Pixels are mapped linearly from [0, 255] to [-1, 1] and items are shaped
    `(1, rows, cols)`.  Files ending in `.gz` are decompressed transparently.
    """
    pixels = _parse_idx(_read_bytes(Path(images_path)), IDX_IMAGES_MAGIC, "image")
    items = pixels.astype(np.float64)[:, None, :, :] / 127.5 - 1.0

    labels = None
    if labels_path is not None:
        labels = _parse_idx(_read_bytes(Path(labels_path)), IDX_LABELS_MAGIC, "label")
        if len(labels) != len(items):
            raise FormatError(
                f"{len(labels)} labels for {len(items)} images", offset=4
            )
        labels = labels.astype(np.int64)

    return Dataset(kind="idx_images", items=items, labels=labels)
