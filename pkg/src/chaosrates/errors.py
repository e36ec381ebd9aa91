"""Exception types raised by the engine."""


class ChaosRatesError(Exception):
    """Base class for all engine errors."""


class InvalidArgumentError(ChaosRatesError, ValueError):
    pass


class DegenerateSpecError(ChaosRatesError, ValueError):
    """The integrand vanishes after a finite time, so the kernel would hit zero."""


class DivergentMassError(ChaosRatesError, ValueError):
    """The expected total mass of sigma^2 is infinite."""


class UnsupportedFamilyError(ChaosRatesError, TypeError):
    pass


class NonPositiveKernelError(ChaosRatesError, ArithmeticError):
    """The pricing kernel fell to or below the underflow floor on the grid."""


class InvalidCurveError(ChaosRatesError, ValueError):
    pass


class ShortRateMismatchError(ChaosRatesError, AssertionError):
    pass


class ConfigError(ChaosRatesError, ValueError):
    pass
