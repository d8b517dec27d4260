"""Scenario assembly, metrics, experiments, plots and the command line."""

from .config import PROTOCOLS, SCENARIOS, RunConfig, desk_config, full_scale_config
from .experiment import ExperimentError, ExperimentResult, run_experiment, run_sweep
from .metrics import METRICS, MetricLog, aggregate, compute_metrics
from .scenario import RunResult, World, run_scenario

__all__ = [
    "PROTOCOLS",
    "SCENARIOS",
    "METRICS",
    "RunConfig",
    "desk_config",
    "full_scale_config",
    "MetricLog",
    "aggregate",
    "compute_metrics",
    "RunResult",
    "World",
    "run_scenario",
    "ExperimentError",
    "ExperimentResult",
    "run_experiment",
    "run_sweep",
]
