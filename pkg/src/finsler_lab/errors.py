"""Exception hierarchy."""


class FinslerError(Exception):
    """Base class for all numerical and configuration errors raised here."""


class ZeroVector(FinslerError, ValueError):
    """A tangent vector y = 0 was passed where TM minus the zero section is required."""


class NonPositiveNorm(FinslerError, ValueError):
    """F(x, y) <= 0 for some y != 0; the metric data is not a norm."""


class NotPositiveDefinite(FinslerError, ValueError):
    """The fundamental tensor failed a Cholesky factorisation."""


class LeftChart(FinslerError):
    """An integrated curve left the (non-periodic) chart or blew up."""


class HorizontalLeak(FinslerError):
    """A bracket that must be vertical had a horizontal part above tolerance."""


class DegenerateDensity(FinslerError):
    """The contact volume density vanished or changed sign on a grid."""


class ConfigError(FinslerError):
    """A scenario file failed to parse or validate."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(f"at {path}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
