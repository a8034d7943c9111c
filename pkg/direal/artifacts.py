"""On-disk artifacts: history tables and sample dumps."""

from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from .errors import UsageError

__all__ = [
    "FLOAT_FORMAT",
    "SAMPLES_PER_ROW",
    "HistoryWriter",
    "to_bytes",
    "image_grid",
    "write_pgm",
    "read_pgm",
    "write_points",
    "write_samples",
]

# round-trippable and stable across runs
FLOAT_FORMAT = "%.17g"
SAMPLES_PER_ROW = 8


class HistoryWriter:
    """Append-only CSV writer with a fixed column order.

    The header is written on the first append.  Missing values (such as
    skipped single-column layers) are written as empty fields.
    """

    def __init__(self, path: Union[str, Path], columns: Sequence[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._started = False

    def append(self, rows: Iterable[Mapping[str, Any]]) -> None:
        frame = pd.DataFrame(list(rows), columns=self.columns)
        if frame.empty:
            return
        frame.to_csv(
            self.path,
            mode="a" if self._started else "w",
            header=not self._started,
            index=False,
            float_format=FLOAT_FORMAT,
            na_rep="",
        )
        self._started = True


def to_bytes(values: np.ndarray) -> np.ndarray:
    "Map [-1, 1] to [0, 255] via round((v + 1) * 127.5)."
    scaled = np.rint((np.clip(values, -1.0, 1.0) + 1.0) * 127.5)
    return scaled.astype(np.uint8)


def image_grid(images: np.ndarray, per_row: int = SAMPLES_PER_ROW) -> np.ndarray:
    """Tile `(n, 1, H, W)` or `(n, H, W)` images into one grayscale array.

    Rows hold `per_row` images; an incomplete last row is padded with -1.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 4:
        if images.shape[1] != 1:
            raise UsageError(f"only single-channel images can be tiled, got {images.shape}")
        images = images[:, 0]
    if images.ndim != 3 or len(images) == 0:
        raise UsageError(f"expected a non-empty stack of images, got shape {images.shape}")

    n, h, w = images.shape
    rows = -(-n // per_row)
    grid = np.full((rows * h, per_row * w), -1.0)
    for i, image in enumerate(images):
        r, c = divmod(i, per_row)
        grid[r * h : (r + 1) * h, c * w : (c + 1) * w] = image
    return grid


def write_pgm(path: Union[str, Path], grid: np.ndarray) -> Path:
    "Binary PGM (P5, maxval 255) from values in [-1, 1]."
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = to_bytes(grid)
    h, w = pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    "Inverse of `write_pgm` for files it produced; returns raw bytes as uint8."
    data = Path(path).read_bytes()
    magic, size, maxval, pixels = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise UsageError(f"not an 8-bit binary PGM: {magic!r}")
    w, h = (int(v) for v in size.split())
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)


def write_points(path: Union[str, Path], points: np.ndarray) -> Path:
    "2-D points as a CSV with columns `x,y`, one row per point."
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    pd.DataFrame(points, columns=["x", "y"]).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_samples(stem: Union[str, Path], samples: np.ndarray) -> Path:
    """Dump generator output: `<stem>.csv` for 2-D points, `<stem>.pgm` for images."""
    stem = Path(stem)
    if samples.ndim == 2 and samples.shape[1] == 2:
        return write_points(stem.with_suffix(".csv"), samples)
    return write_pgm(stem.with_suffix(".pgm"), image_grid(samples))
