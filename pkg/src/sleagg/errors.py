"""Exception types shared across the package."""


class SleaggError(Exception):
    """Base class for package-specific failures."""


class PreconditionError(SleaggError, ValueError):
    """An argument violated a documented precondition."""


class SwallowedPointError(SleaggError):
    """A tracked interior point was (numerically) swallowed by the hull.

    Carries the capacity time at which the imaginary part of the
    mapped point dropped below the solver threshold.
    """

    def __init__(self, time: float, message: str = ""):
        self.time = float(time)
        super().__init__(message or f"tracked point swallowed at capacity time {time:g}")


class NumericalDegeneracyError(SleaggError):
    """A solver left its validated regime (step collapse, Newton failure)."""


class EmptyEnsembleError(SleaggError, ValueError):
    """An operation that needs at least one atom received an empty ensemble."""


class ResourceLimitError(SleaggError):
    """A configured size or budget cap would be exceeded."""


class MixedEnsembleError(SleaggError, ValueError):
    """Ingested traces carry inconsistent metadata (e.g. several kappa values)."""
