"""Exception types shared across the package."""


class AffineLabError(Exception):
    """Base class for all library errors."""


class NotSubcritical(AffineLabError):
    """Raised when the effective linear drift has nonnegative spectral bound."""


class NotValidated(AffineLabError):
    """Raised when an operation requires a validated parameter set."""


class StepSizeUnderflow(AffineLabError):
    """Raised when the adaptive integrator cannot make progress."""


class DomainBlowup(AffineLabError):
    """Raised when a complex Riccati solution leaves the transform domain."""


class PriceOutOfBounds(AffineLabError):
    """Raised when a call price violates its no-arbitrage interval."""


class MajorantOverflow(AffineLabError):
    """Raised when a thinning majorant rate exceeds the safety cap."""
