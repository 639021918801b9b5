"""Exception types shared across the toolkit."""


class MismatchedTraceError(ValueError):
    """Two traces that must share dt/length/t0 do not."""


class MismatchedGatherError(ValueError):
    """Two shot gathers that must be aligned (receivers, dt, length) are not."""


class MismatchedSurveyError(ValueError):
    """Two surveys that must be aligned shot-by-shot are not."""


class GridMismatchError(ValueError):
    """Two velocity models that must share a grid do not."""


class SingularSystemError(RuntimeError):
    """Newton system could not be made positive definite within the damping cap."""


class InstabilityError(RuntimeError):
    """Wavefield norm blew up; the time step likely violates the CFL bound."""


class NonFiniteMisfitError(RuntimeError):
    """Data misfit became NaN/inf during inversion."""
