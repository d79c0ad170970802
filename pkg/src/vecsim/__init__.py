"""Vehicular edge computing offloading simulator with MADDPG and baseline policies."""

__version__ = "0.1.0"

from .config import ConfigError, ScenarioConfig, desk_config, load_config  # noqa: E402,F401
