"""Exception types shared across the package."""


class BinsparxError(Exception):
    """Base class for all package-specific errors."""


class DomainError(BinsparxError, ValueError):
    """A value lies outside its permitted domain (e.g. a non-binary element)."""


class ShapeError(BinsparxError, ValueError):
    """Array shapes or vector lengths are inconsistent."""


class ConfigError(BinsparxError, ValueError):
    """Invalid or inconsistent configuration."""


class ConfigWarning(UserWarning):
    """Legal but suspicious configuration (e.g. a 0-bit ADC)."""


class ParseError(BinsparxError, ValueError):
    """A model, dataset, LUT, or config file could not be parsed."""


class SolverError(BinsparxError, RuntimeError):
    """The nodal solver hit a numerical failure (e.g. singular system)."""


class NonConvergenceError(BinsparxError, RuntimeError):
    """A column solve did not converge and best-effort mode is off."""


class FoldError(BinsparxError, ValueError):
    """Batch-norm folding is impossible for the given parameters."""


class ValidationError(BinsparxError, RuntimeError):
    """A self-check (solver validation, sparsifier probe) failed."""
