"""Experiment orchestration: configuration, sweeps, metrics and the command line."""

from .config import ConfigError, ExperimentConfig, Scenario, Sweep, load_config
from .crb import crb_reference
from .metrics import pcd, rmse_db
from .sweep import MetricRow, SweepResult, run_sweep

__all__ = ["ConfigError", "ExperimentConfig", "Scenario", "Sweep", "load_config", "crb_reference",
           "pcd", "rmse_db", "MetricRow", "SweepResult", "run_sweep"]
