"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`PerpexError`,
so callers (the CLI in particular) can separate configuration mistakes from
numerical or Monte Carlo failures.
"""


class PerpexError(Exception):
    """Base class."""


class SpecError(PerpexError, ValueError):
    """A distribution or configuration parameter is out of range.

    ``field`` names the offending parameter.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class IneligibleSpecError(SpecError):
    """The law of M violates an assumption and no override was given."""


class CapabilityError(PerpexError):
    """Operation not defined for this distribution family."""


class NumericalError(PerpexError, ArithmeticError):
    """A quadrature, bisection or root search did not reach its tolerance."""

    def __init__(self, message, achieved=None):
        self.achieved = achieved
        if achieved is not None:
            message = f"{message} (achieved {achieved:.3g})"
        super().__init__(message)


class RootFindingError(NumericalError):
    """No sign change could be bracketed."""


class EstimationError(PerpexError):
    """Too little data for the requested estimate."""


class InsufficientSampleError(EstimationError):
    def __init__(self, required, available, what="sample"):
        self.required = required
        self.available = available
        super().__init__(
            f"{what} too small: need at least {required} values, got {available}"
        )


class ReplicaError(PerpexError):
    """A replica in an ensemble failed; ``replica`` is its id."""

    def __init__(self, replica, cause):
        self.replica = replica
        self.cause = cause
        super().__init__(f"replica {replica} failed: {cause!r}")


class ConfigError(PerpexError):
    """Malformed experiment configuration (CLI exit code 2)."""
