class SteinQueueError(Exception):
    pass


class ConfigurationError(SteinQueueError, ValueError):
    """Bad parameters, bad family strings, bad config files."""


class UnsupportedRouteError(SteinQueueError):
    """A sampling route was asked for a queue it does not apply to."""


class NumericalError(SteinQueueError, ArithmeticError):
    """Quadrature or root finding failed to reach its tolerance."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"
