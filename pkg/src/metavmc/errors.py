"""Exception types raised across the package."""


class MetaVmcError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MetaVmcError, ValueError):
    pass


class CapacityError(MetaVmcError):
    """Raised when an enumeration would exceed its size guard."""


class NumericDomainError(MetaVmcError, ArithmeticError):
    pass


class DegenerateEnsembleError(MetaVmcError, ArithmeticError):
    """Raised when an ensemble moment matrix is singular."""

    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class ConfigError(MetaVmcError, ValueError):
    pass
