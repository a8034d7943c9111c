from .commands import main
from .config import ExperimentConfig, load_config, to_config_text

__all__ = ["ExperimentConfig", "load_config", "main", "to_config_text"]
