import math
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union


def validate_layer_selector(
    selector: Optional[Sequence[int]],
) -> Optional[Tuple[int, ...]]:
    if selector is None:
        return None
    indices = tuple(sorted(set(int(i) for i in selector)))
    if any(i < 0 for i in indices):
        raise ValueError(f"Layer indices must be non-negative, got {indices}")
    return indices


def validate_finite(value: float) -> float:
    if not math.isfinite(value):
        raise ValueError(f"Expected a finite number, got {value!r}")
    return value


def resolve_path(path: Union[str, Path, None]) -> Optional[Path]:
    if path is None or path == "":
        return None
    return Path(path).expanduser().resolve()


def validate_existing_file(path: Union[str, Path, None]) -> Optional[Path]:
    resolved = resolve_path(path)
    if resolved is not None and not resolved.is_file():
        raise ValueError(f"File does not exist: {resolved}")
    return resolved
