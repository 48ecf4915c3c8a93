"""Quantized tile-wise CNN image restoration with fine-tune recovery."""

from edgerestore.errors import (
    CalibrationError,
    DataError,
    EdgeRestoreError,
    GraphError,
    ModelFormatError,
    PlanError,
    ShapeError,
    StateError,
)
from edgerestore.tensor import QuantParams, QuantTensor

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "DataError",
    "EdgeRestoreError",
    "GraphError",
    "ModelFormatError",
    "PlanError",
    "QuantParams",
    "QuantTensor",
    "ShapeError",
    "StateError",
    "__version__",
]
