"""Configuration, checkpoints, experiment runners and the CLI."""

from .checkpoint import (
    CheckpointCorruptError,
    CheckpointDimensionError,
    CheckpointError,
    CheckpointIOError,
    CheckpointSchemaError,
    load_checkpoint,
    load_pti_result,
    save_checkpoint,
    save_pti_result,
)
from .config import ConfigError, RunConfig
from .experiments import run_grid_experiment, run_inversion_bench, run_tradeoff
