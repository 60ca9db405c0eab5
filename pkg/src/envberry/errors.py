"""Exception hierarchy shared by all modules."""


class EnvBerryError(Exception):
    """Base class for package errors."""


class ConfigurationError(EnvBerryError, ValueError):
    """Invalid model, loop or run configuration."""


class NonIntegrableMomentError(EnvBerryError, ValueError):
    """A spectral moment diverges at x -> 0."""

    def __init__(self, n: int, exponent: int):
        self.n = n
        self.exponent = exponent
        super().__init__(
            f"moment chi_{n} diverges: integrand behaves as x**{exponent} near x=0"
        )


class RegimeError(EnvBerryError, ValueError):
    """Operation requested in the wrong regime (quantum vs classical)."""


class ClosureError(EnvBerryError, ValueError):
    """Loop does not close on itself."""


class DomainError(EnvBerryError, ValueError):
    """Argument outside the valid domain."""


class IntegrationError(EnvBerryError, RuntimeError):
    """Time integration failed."""

    def __init__(self, message: str, last_t: float | None = None):
        self.last_t = last_t
        super().__init__(message if last_t is None else f"{message} (last good t={last_t:g})")


class KernelError(EnvBerryError, RuntimeError):
    """Kernel evaluation not possible (e.g. kernel does not decay)."""


class FitError(EnvBerryError, ValueError):
    """Scaling regression is ill-posed."""


class FamilyMismatchError(FitError):
    """Runs in a family do not share a loop shape."""
