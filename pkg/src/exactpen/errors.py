"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class EvaluationError(RuntimeError):
    """A user callable produced a non-finite value.

    Carries the sample index ``index`` and time ``time`` at which the
    evaluation failed, when known.
    """

    def __init__(self, message, index=None, time=None):
        super().__init__(message)
        self.index = index
        self.time = time


class CapabilityError(RuntimeError):
    """An operation requires a callable the problem does not provide."""


class NondifferentiablePointError(ArithmeticError):
    """Gradient requested at a point where the penalty term has a kink.

    Raised when the exact (unsmoothed) penalty gradient is requested on the
    feasible set.  Callers that need derivatives near feasibility should pass
    a positive smoothing parameter instead.
    """


class CatalogKeyError(KeyError):
    """Unknown problem id.  The message lists the available ids."""


class ConfigError(ValueError):
    """A run configuration file failed to parse or validate."""
