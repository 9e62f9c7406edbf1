"""Exception hierarchy shared by all modules."""


class LeakyUQError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(LeakyUQError, ValueError):
    """Operand shapes do not conform."""


class ValidationError(LeakyUQError, ValueError):
    """An argument is outside its admissible domain."""


class FactorizationError(LeakyUQError, ArithmeticError):
    """A matrix factorization broke down.

    ``index`` is the offending pivot (0-based) when one is known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateLawError(LeakyUQError, ValueError):
    """The requested density does not exist because the law is a point mass."""


class CapabilityError(LeakyUQError, ValueError):
    """The request exceeds what the chosen algorithm can evaluate."""


class TrainingError(LeakyUQError, RuntimeError):
    """Training diverged."""


class ParseError(LeakyUQError, ValueError):
    """A serialized artifact is malformed."""
