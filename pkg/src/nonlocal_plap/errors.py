"""Exception hierarchy shared by all modules."""


class NonlocalPLapError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(NonlocalPLapError, ValueError):
    pass


class DegenerateStencilError(NonlocalPLapError, ValueError):
    pass


class ConditionViolatedError(NonlocalPLapError):
    """The Neumann lower bound on the kernel mass inside the domain fails."""


class SingularityError(NonlocalPLapError, ArithmeticError):
    pass


class NonFiniteError(NonlocalPLapError, FloatingPointError):
    pass


class GridMismatchError(NonlocalPLapError, ValueError):
    pass


class StepFailureError(NonlocalPLapError, RuntimeError):
    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm


class UnsupportedProblemError(NonlocalPLapError, ValueError):
    pass


class InsufficientDataError(NonlocalPLapError, ValueError):
    pass


class InsufficientResolutionError(NonlocalPLapError, ValueError):
    pass


class ConfigError(NonlocalPLapError, ValueError):
    """Carries every problem found in a configuration, not only the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
