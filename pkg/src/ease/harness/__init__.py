"""Training, evaluation, persistence and the command line."""

from .checkpoint import (
    Checkpoint, CheckpointError, CheckpointVersionError, CorruptCheckpointError, ShapeMismatchError,
    TruncatedCheckpointError, load_checkpoint, save_checkpoint,
)
from .config import TrainConfig, apply_overrides, load_config, preset
from .evaluation import evaluate, sparsity_sweep, summarize
from .optim import Adam, lr_schedule
from .training import NonFiniteLossError, TrainState, pretrain, restore_state, resume, train

__all__ = [
    "Adam", "Checkpoint", "CheckpointError", "CheckpointVersionError", "CorruptCheckpointError",
    "NonFiniteLossError", "ShapeMismatchError", "TrainConfig", "TrainState", "TruncatedCheckpointError",
    "apply_overrides", "evaluate", "load_checkpoint", "load_config", "lr_schedule", "preset", "pretrain",
    "restore_state", "resume", "save_checkpoint", "sparsity_sweep", "summarize", "train",
]
