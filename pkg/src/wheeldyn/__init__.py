"""Data-driven dynamics models for wheeled mobile robots."""

from .errors import DataError, NumericError
from .core import (
    Pose,
    TimedPose,
    ChassisTwist,
    Command,
    Trajectory,
    Dataset,
    load_dataset,
    save_dataset,
    split_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "NumericError",
    "Pose",
    "TimedPose",
    "ChassisTwist",
    "Command",
    "Trajectory",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "split_dataset",
    "__version__",
]
