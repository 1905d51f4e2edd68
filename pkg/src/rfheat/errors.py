"""Exception types raised across the package."""


class RFHeatError(Exception):
    """Base class for all package errors."""


class ExistenceTimeError(RFHeatError, ValueError):
    """The metric degenerates (scale <= 0) inside the requested interval."""


class CFLViolation(RFHeatError, ValueError):
    """Explicit time step exceeds the diffusion stability limit."""


class BlowUpError(RFHeatError, RuntimeError):
    """The conformal factor left the admissible range during integration."""


class PositivityError(RFHeatError, RuntimeError):
    """A heat solution lost strict positivity."""


class HypothesisViolation(RFHeatError):
    """A theorem hypothesis fails on the supplied data."""


class InjectivityRadiusError(RFHeatError, ValueError):
    """A ball radius exceeds the injectivity radius of its centre."""


class ConfigError(RFHeatError, ValueError):
    """Malformed or invalid scenario configuration."""
