"""Configuration, training loops, evaluation and resumable benchmark grids."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import (
    METHODS,
    UDA_METHODS,
    ConfigError,
    EvalConfig,
    TrainConfig,
    config_hash,
    load_config,
)
from .evaluation import MetricsReport, evaluate
from .grid import GridError, GridResult, aggregate, load_manifest, parse_manifest, radar, run_grid, write_reports
from .seeding import stream, streams
from .training import RunRecord, TrainingDiverged, build_model, load_run, save_run, train, train_cached

__all__ = [
    "CheckpointError", "ConfigError", "EvalConfig", "GridError", "GridResult", "METHODS",
    "MetricsReport", "RunRecord", "TrainConfig", "TrainingDiverged", "UDA_METHODS", "aggregate",
    "build_model", "config_hash", "evaluate", "load_checkpoint", "load_config", "load_manifest",
    "load_run", "parse_manifest", "radar", "run_grid", "save_checkpoint", "save_run", "stream",
    "streams", "train", "train_cached", "write_reports",
]
