"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class GeometryError(InvalidArgumentError):
    """A cube or cylinder does not fit where the operation needs it."""


class ResolutionError(InvalidArgumentError):
    """The lattice is too coarse to resolve the requested geometry."""


class InvalidLevelError(InvalidArgumentError):
    """A truncation level is incompatible with the boundary trace."""


class NormalizationError(InvalidArgumentError):
    """An oscillation bound was called with data that must be rescaled first."""


class ConvergenceError(RuntimeError):
    """An iterative solve hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepFailureError(RuntimeError):
    """A time step's Newton iteration failed even at the damping floor."""

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


class ToleranceError(RuntimeError):
    """A quadrature or fit did not reach the requested tolerance."""
