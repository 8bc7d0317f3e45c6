"""Chained-equation multiple imputation for survey data with skip patterns and brackets."""

__version__ = "0.1.0"

from .data_model import CellState, DataValidationError, Dataset, VariableSpec, load_dataset  # noqa: E402
from .engine import CompletedSet, EngineConfig, run  # noqa: E402

__all__ = [
    "CellState",
    "CompletedSet",
    "DataValidationError",
    "Dataset",
    "EngineConfig",
    "VariableSpec",
    "load_dataset",
    "run",
]
