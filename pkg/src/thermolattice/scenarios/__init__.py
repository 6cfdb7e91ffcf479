"""Experiment runner and command-line front end."""

from .config import ConfigError, ScenarioConfig, load_config
from .runner import RunRecord, run_scenario

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "RunRecord", "run_scenario"]
