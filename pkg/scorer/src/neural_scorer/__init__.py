"""Span-label scorer service speaking the glilem-scorer wire protocol."""

from .data import TrainingExample, examples_from_details, prepare_training_data
from .errors import BadRequestError, DataError, ModelError, ScorerServiceError
from .model import SpanLabelModel
from .server import ScorerSession, serve_stdio, serve_tcp
from .training import train

__all__ = [
    "TrainingExample",
    "examples_from_details",
    "prepare_training_data",
    "BadRequestError",
    "DataError",
    "ModelError",
    "ScorerServiceError",
    "SpanLabelModel",
    "ScorerSession",
    "serve_stdio",
    "serve_tcp",
    "train",
]

__version__ = "0.1.0"
