"""Exception hierarchy shared across the package."""


class QkdflError(Exception):
    """Base class for all package-specific errors."""


class DegenerateSessionError(QkdflError):
    """A key-agreement session produced an empty sifted key."""


class InvalidPairError(QkdflError):
    """A pairwise key was requested for an invalid client pair (i == j)."""


class AggregationShapeError(QkdflError):
    """Masked updates submitted for aggregation are structurally incompatible."""


class ProtocolError(QkdflError):
    """Updates from different rounds (or duplicate clients) were mixed."""


class UndefinedProxyError(QkdflError):
    """A leakage proxy is undefined for the given inputs (zero norm/variance)."""


class DivergenceError(QkdflError):
    """Local training produced a non-finite loss."""


class ConfigError(QkdflError):
    """An experiment configuration is missing or malformed."""
