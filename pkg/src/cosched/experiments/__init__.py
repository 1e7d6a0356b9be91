"""Configuration, synthetic data and experiment orchestration."""

from .build import Instance, StepSizeWarning, build_instance
from .config import ConfigError, ExperimentConfig, format_config, load_config, parse_config, write_config
from .data import Dataset, generate_dataset, read_csv, shard_dataset, write_csv
from .runner import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_INFEASIBLE,
    EXIT_OK,
    RunResult,
    load_checkpoint,
    read_trace,
    run_experiment,
    save_checkpoint,
)

__all__ = [
    "ConfigError", "Dataset", "EXIT_CONFIG", "EXIT_DIVERGED", "EXIT_INFEASIBLE", "EXIT_OK",
    "ExperimentConfig", "Instance", "RunResult", "StepSizeWarning", "build_instance", "format_config",
    "generate_dataset", "load_checkpoint", "load_config", "parse_config", "read_csv", "read_trace",
    "run_experiment", "save_checkpoint", "shard_dataset", "write_config", "write_csv",
]
