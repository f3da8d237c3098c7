from .config import ConfigError, DEFAULTS, gen_config, load_config, run_settings
from .main import cli

__all__ = ["cli", "ConfigError", "DEFAULTS", "load_config", "gen_config", "run_settings"]
