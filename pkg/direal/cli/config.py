"""Flat `key = value` experiment configuration.

Config files hold one setting per line; `#` starts a comment and blank
lines are ignored.  Values are parsed by the field types of
`ExperimentConfig`.  `none` (any case) or an empty value means unset, and
`layer_selector` takes a comma-separated list of integers.
"""

import dataclasses
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Literal, Optional, Tuple, Union

from annotated_types import Annotated, Gt
from pydantic import AfterValidator, ConfigDict, PositiveInt, ValidationError
from pydantic.dataclasses import dataclass

from ..data import Dataset, gaussian_ring, grid25, load_idx
from ..errors import ConfigurationError
from ..train import TrainConfig
from ..utils.validators import resolve_path, validate_existing_file

__all__ = [
    "ExperimentConfig",
    "config_keys",
    "parse_config_text",
    "parse_overrides",
    "build_config",
    "load_config",
    "to_config_text",
    "load_dataset",
]

dataclass_config = ConfigDict(validate_assignment=True, extra="forbid")

WandbMode = Literal["disabled", "offline", "online"]
OptionalFile = Annotated[Optional[Path], AfterValidator(validate_existing_file)]

# key -> (value, line number or None for command-line overrides)
RawSettings = Dict[str, Tuple[Any, Optional[int]]]


@dataclass(config=dataclass_config)
class ExperimentConfig(TrainConfig):
    """Everything one `direal` invocation needs: training, data and output settings.

    Attributes:
        ring_modes (int): Mixture components on the ring dataset.
        ring_radius (float): Ring radius.
        ring_sigma (float): Per-component standard deviation on the ring.
        grid_spacing (float): Lattice spacing of the 5x5 grid dataset.
        grid_sigma (float): Per-component standard deviation on the grid.
        n_samples (int): Points drawn for synthetic datasets.
        images_path (Optional[Path]): IDX images file, required for `dataset = idx`.
        labels_path (Optional[Path]): Optional IDX labels file.
        out_dir (Path): Where artifacts are written.
        wandb_mode (Literal["disabled", "offline", "online"]): Experiment tracking mode.
        wandb_project (str): Tracking project name.
        eval_samples (int): Generator samples drawn by `eval`.
    """

    ring_modes: Annotated[int, Gt(1)] = 8
    ring_radius: Annotated[float, Gt(0)] = 2.0
    ring_sigma: Annotated[float, Gt(0)] = 0.05
    grid_spacing: Annotated[float, Gt(0)] = 2.0
    grid_sigma: Annotated[float, Gt(0)] = 0.05
    n_samples: PositiveInt = 8192
    images_path: OptionalFile = None
    labels_path: OptionalFile = None
    out_dir: Annotated[Path, AfterValidator(resolve_path)] = Path("runs/direal")
    wandb_mode: WandbMode = "disabled"
    wandb_project: str = "direal"
    eval_samples: PositiveInt = 2048

    @property
    def train_config(self) -> TrainConfig:
        names = [f.name for f in dataclasses.fields(TrainConfig)]
        return TrainConfig(**{name: getattr(self, name) for name in names})


def config_keys() -> Tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(ExperimentConfig))


def _coerce(key: str, raw: str) -> Any:
    value = raw.strip()
    if value.lower() in ("", "none", "null"):
        return None
    if key == "layer_selector":
        return tuple(int(part) for part in value.split(",") if part.strip())
    return value


def parse_config_text(text: str) -> RawSettings:
    """Parse config file text into raw settings, validating only the keys."""
    known = set(config_keys())
    settings: RawSettings = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigurationError(f"expected `key = value`, got {content!r}", line=lineno)
        key, raw = (part.strip() for part in content.split("=", 1))
        if key not in known:
            raise ConfigurationError("unknown setting", key=key, line=lineno)
        try:
            settings[key] = (_coerce(key, raw), lineno)
        except ValueError as e:
            raise ConfigurationError(str(e), key=key, line=lineno) from e
    return settings


def parse_overrides(pairs: Iterable[str]) -> RawSettings:
    "`--set key=value` overrides."
    known = set(config_keys())
    settings: RawSettings = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"expected key=value, got {pair!r}")
        key, raw = (part.strip() for part in pair.split("=", 1))
        if key not in known:
            raise ConfigurationError("unknown setting", key=key)
        try:
            settings[key] = (_coerce(key, raw), None)
        except ValueError as e:
            raise ConfigurationError(str(e), key=key) from e
    return settings


def build_config(settings: RawSettings) -> ExperimentConfig:
    """Validate raw settings, translating pydantic errors into `ConfigurationError`."""
    values = {key: value for key, (value, _) in settings.items() if value is not None}
    try:
        cfg = ExperimentConfig(**values)
    except ValidationError as e:
        error = e.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else None
        line = settings[key][1] if key in settings else None
        raise ConfigurationError(error["msg"], key=key, line=line) from None

    if cfg.dataset == "idx" and cfg.images_path is None:
        line = settings["dataset"][1] if "dataset" in settings else None
        raise ConfigurationError("required when dataset = idx", key="images_path", line=line)
    return cfg


def load_config(
    path: Union[str, Path, None] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    out_dir: Union[str, Path, None] = None,
) -> ExperimentConfig:
    """Read a config file (if any) and apply command-line overrides on top."""
    settings: RawSettings = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigurationError(f"cannot read config file: {e}", key="config") from e
        settings.update(parse_config_text(text))
    settings.update(parse_overrides(overrides))
    if seed is not None:
        settings["seed"] = (seed, None)
    if out_dir is not None:
        settings["out_dir"] = (str(out_dir), None)
    return build_config(settings)


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def to_config_text(cfg: ExperimentConfig) -> str:
    "Inverse of `parse_config_text` followed by `build_config`."
    lines = [f"{key} = {_format(getattr(cfg, key))}" for key in config_keys()]
    return "\n".join(lines) + "\n"


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    """Build the dataset named by `cfg.dataset` from its settings and the run seed."""
    if cfg.dataset == "ring":
        return gaussian_ring(cfg.ring_modes, cfg.ring_radius, cfg.ring_sigma, cfg.n_samples, cfg.seed)
    if cfg.dataset == "grid":
        return grid25(cfg.grid_spacing, cfg.grid_sigma, cfg.n_samples, cfg.seed)
    return load_idx(cfg.images_path, cfg.labels_path)  # type: ignore[arg-type]
