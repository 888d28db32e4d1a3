"""Experiment configuration, execution and the command line."""

from .config import ExperimentConfig, load_config
from .runner import run_experiment, summarize

__all__ = ["ExperimentConfig", "load_config", "run_experiment", "summarize"]
