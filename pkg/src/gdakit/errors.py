"""Exception types shared across the package.

Every failure the library raises on purpose derives from GdaError, so callers
(and the command line front end) can distinguish "your input is wrong" from a
genuine bug.
"""


class GdaError(Exception):
    """Base class for all errors raised deliberately by this package."""


class ShapeError(GdaError):
    """Operands have incompatible or malformed shapes."""


class DomainError(GdaError):
    """A value lies outside the mathematical domain of an operation."""


class ValidationError(GdaError):
    """Input data violates a structural contract (graphs, labels, files)."""


class ConfigError(GdaError):
    """A configuration value or key is invalid."""


class UndefinedStatisticError(GdaError):
    """A statistic has no defined value on the given input."""


class DegenerateBandwidthError(GdaError):
    """Kernel bandwidth selection collapsed (no usable pairwise distance)."""


class DivergedRunError(GdaError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")
