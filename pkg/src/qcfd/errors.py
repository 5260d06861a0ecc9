"""Exception types shared across the package."""


class QcfdError(Exception):
    """Base class for all package errors."""


class ParameterError(QcfdError, ValueError):
    """A parameter lies outside its valid domain."""


class DegenerateMorphologyError(ParameterError):
    """Fiducial windows collapsed to an empty range."""


class ConsistencyError(QcfdError, ValueError):
    """Inputs that must agree with each other do not."""


class OperatorError(QcfdError, ValueError):
    """An interference operator is not Hermitian with zero diagonal."""


class ShapeError(QcfdError, ValueError):
    pass


class DegenerateBaselineError(QcfdError, ZeroDivisionError):
    """A normalized score has a zero baseline denominator."""


class DataError(QcfdError):
    """Malformed input file or dataset."""


class NumericHealthError(QcfdError, FloatingPointError):
    """A loss or parameter became non-finite during training."""
