"""Exception types raised across the package."""


class DeconvError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DeconvError, ValueError):
    """Invalid parameters (bad kernel order, Feller violation, ...)."""


class DomainError(DeconvError, ValueError):
    """Input outside the mathematical domain of an operation."""


class SingularDivisorError(DomainError):
    """The error Mellin transform vanishes on the quadrature grid."""

    def __init__(self, p, modulus):
        self.p = float(p)
        self.modulus = float(modulus)
        super().__init__(
            f"error Mellin transform is numerically zero at p={self.p:.6g} "
            f"(|g_mt|={self.modulus:.3g})"
        )


class AccuracyError(DeconvError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, residual):
        self.residual = float(residual)
        super().__init__(f"{message} (residual estimate {self.residual:.3g})")


class VerificationError(DeconvError, AssertionError):
    """A numerical assumption check failed."""
