"""Exception hierarchy shared by all modules."""


class NAKernelError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(NAKernelError, ValueError):
    pass


class UnsupportedRegionError(NAKernelError, ValueError):
    """The (a, x, y) configuration falls in none of the four bound regions.

    Callers are expected to split the interval at -a, 0 or a and query each
    piece separately.
    """


class DivergentFunctionalError(NAKernelError, ValueError):
    pass


class DivergentDriftError(NAKernelError, ValueError):
    pass


class DegenerateGroupError(NAKernelError, ValueError):
    pass


class SingularKernelError(NAKernelError, ArithmeticError):
    pass


class FitFailureError(NAKernelError, RuntimeError):
    pass


class ConfigError(NAKernelError, ValueError):
    pass
