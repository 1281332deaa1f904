"""Core domain interfaces specification and other important items."""
from .domain import Experiment, ExperimentResult, Model, ResultWriter, Table
from .exceptions import (
    AvgMartError,
    EmptyEnsembleError,
    NonpositiveHorizonError,
    NonpositiveParameterError,
    ShapeMismatchError,
    TimeOrderError,
)

__all__ = [
    "AvgMartError",
    "EmptyEnsembleError",
    "Experiment",
    "ExperimentResult",
    "Model",
    "NonpositiveHorizonError",
    "NonpositiveParameterError",
    "ResultWriter",
    "ShapeMismatchError",
    "Table",
    "TimeOrderError",
]
