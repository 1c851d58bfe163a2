"""Exception hierarchy shared by every module."""


class CareError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(CareError, ValueError):
    """An argument is outside its allowed range."""


class DataError(CareError, ValueError):
    """Input data failed to parse or validate."""


class EmptyUnionError(CareError):
    """No detector flagged any point, so agreement over the union is undefined."""


class NumericalError(CareError, ArithmeticError):
    """A numerical routine could not produce a usable result."""
