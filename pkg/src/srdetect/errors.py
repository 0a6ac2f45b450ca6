"""Exception types."""


class DomainError(ValueError):
    """Argument outside the domain of an operation (non-positive lr, rho >= 1, ...)."""


class UndefinedPosteriorError(DomainError):
    """Posterior probability requested at rho = 0."""


class UnsupportedModelError(ValueError):
    """Operation not available for this model family."""


class CalibrationError(RuntimeError):
    """Threshold search failed; ``diagnostic`` holds the evaluated points."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class CalibrationUnreliableError(CalibrationError):
    """Too many runs hit the truncation cap for the estimate to be trusted."""


class CalibrationMismatchError(ValueError):
    """Rules offered for comparison are not calibrated to the same ARL2FA."""


class KTooLargeError(RuntimeError):
    """Rejection sampling on {N >= k} accepts too few runs."""
