"""Numerical checks of gradient estimates for the heat equation under Ricci flow."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BlowUpError,
    CFLViolation,
    ConfigError,
    ExistenceTimeError,
    HypothesisViolation,
    InjectivityRadiusError,
    PositivityError,
    RFHeatError,
)

__all__ = [
    "BlowUpError",
    "CFLViolation",
    "ConfigError",
    "ExistenceTimeError",
    "HypothesisViolation",
    "InjectivityRadiusError",
    "PositivityError",
    "RFHeatError",
    "__version__",
]
