"""Utility helpers."""
from srgbnoise.utils.errors import (
    ConfigurationError,
    DivergedError,
    FitError,
    FormatError,
    InsufficientDataError,
    NoiseModelError,
    NotFoundError,
    NumericalError,
    ParseError,
    UnknownConditionError,
    ValidationError,
)

__all__ = [
    "NoiseModelError",
    "ValidationError",
    "NotFoundError",
    "ParseError",
    "FormatError",
    "InsufficientDataError",
    "FitError",
    "UnknownConditionError",
    "ConfigurationError",
    "NumericalError",
    "DivergedError",
]
