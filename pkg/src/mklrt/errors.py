"""Exception types raised by mklrt."""


class MklRtError(Exception):
    """Base class for all mklrt errors."""


class InvalidInputError(MklRtError, ValueError):
    """Inputs violate a documented precondition (shape, sign, range)."""


class NumericalError(MklRtError, ArithmeticError):
    """A factorization or solve failed on otherwise valid inputs."""
