from .config import ConfigError, ExperimentConfig, parse_config, parse_config_text
from .train import RunRecord, TrainingError, build_datasets, run_experiment, run_trial, train_one

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "TrainingError",
    "build_datasets",
    "parse_config",
    "parse_config_text",
    "run_experiment",
    "run_trial",
    "train_one",
]
