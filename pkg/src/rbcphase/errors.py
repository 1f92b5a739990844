"""Exception types shared across the pipeline."""


class RbcPhaseError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(RbcPhaseError, ValueError):
    """Cell or region does not fit the requested canvas."""


class AliasingError(RbcPhaseError, ValueError):
    """Spatial carrier at or above the Nyquist limit."""


class PlacementError(RbcPhaseError, RuntimeError):
    """Requested cell count cannot be placed under the non-overlap policy."""


class FilterError(RbcPhaseError, ValueError):
    """Spectral filter misconfigured (order overlap or out of bounds)."""


class DegenerateFieldError(RbcPhaseError, ValueError):
    """Complex field is identically zero; phase undefined."""


class NotWrappedError(RbcPhaseError, ValueError):
    """Operation requires a wrapped phase map."""


class InfiniteCoherenceError(RbcPhaseError, ZeroDivisionError):
    """Zero angular and spectral width: coherence length diverges."""


class InsufficientDataError(RbcPhaseError, ValueError):
    """A class has fewer samples than the balancing target."""


class SplitError(RbcPhaseError, ValueError):
    """Subject split sets overlap or fail to cover the subjects."""


class UndefinedRateError(RbcPhaseError, ZeroDivisionError):
    """Confusion-count denominator is zero for the requested rate."""


class DegenerateRocError(RbcPhaseError, ValueError):
    """ROC curve needs at least one positive and one negative sample."""


class NumericFaultError(RbcPhaseError, FloatingPointError):
    """Non-finite value detected inside the network forward pass."""


class DivergenceError(RbcPhaseError, RuntimeError):
    """Training loss went non-finite; carries the last good parameters."""

    def __init__(self, message, last_good_state=None, log=None):
        super().__init__(message)
        self.last_good_state = last_good_state
        self.log = log if log is not None else []


class ConfigError(RbcPhaseError, ValueError):
    """Pipeline configuration failed validation."""


class StageError(RbcPhaseError, RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
