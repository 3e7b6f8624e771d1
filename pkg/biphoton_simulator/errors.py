# --- errors.py ---
from typing import Any, Optional


class BiphotonError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigError(BiphotonError):
    """Configuration file, preset or override could not be resolved."""


class InvalidParameterError(BiphotonError, ValueError):
    """A physical or numerical input lies outside its valid domain."""


class SingularParameterError(InvalidParameterError):
    pass


class ResolutionError(InvalidParameterError):
    pass


class WrongRegimeError(InvalidParameterError):
    pass


class NumericalError(BiphotonError, ArithmeticError):
    """A computation produced a non-finite or non-convergent result."""


class NoCoalescenceError(NumericalError):
    def __init__(self, message: str, min_splitting: float):
        super().__init__(message)
        self.min_splitting = min_splitting


class NormalizationError(NumericalError):
    pass


class FitFailureError(NumericalError):
    def __init__(self, message: str, best_so_far: Optional[Any] = None):
        super().__init__(message)
        self.best_so_far = best_so_far


class NoSignalError(NumericalError):
    pass


def exit_code_for(exc: BaseException) -> int:
    """Process exit code for an exception escaping a CLI command."""
    if isinstance(exc, (ConfigError, InvalidParameterError)):
        return 2
    if isinstance(exc, NumericalError):
        return 3
    if isinstance(exc, OSError):
        return 4
    return 1
