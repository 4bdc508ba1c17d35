"""Exception hierarchy shared by every module."""


class QVError(Exception):
    """Base class for all package errors."""


class DomainError(QVError, ValueError):
    """An argument lies outside the domain of a function."""


class DesignError(QVError, ValueError):
    """A sampling design violates its geometric requirements."""


class OrderingAmbiguousError(DesignError):
    """Nearest-neighbour ordering of curve points is not trustworthy."""


class DegenerateCellError(QVError, ValueError):
    """A lattice cell has a (numerically) singular local frame."""


class DegenerateDataError(QVError, ValueError):
    """Observations give a zero variation, so no ratio can be formed."""


class IllConditionedCovarianceError(QVError, ArithmeticError):
    """Cholesky failed for every jitter level in the ladder."""


class ConfigurationError(QVError, ValueError):
    """An (order, bound) combination or experiment setting is unusable."""
