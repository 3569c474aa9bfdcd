"""Exception types shared across the package."""


class HallucError(Exception):
    """Base class for package-specific errors."""


class ConfigError(HallucError, ValueError):
    """Invalid configuration or argument values."""


class DataError(HallucError, ValueError):
    """Dataset, split, or episode construction problems."""


class NumericsError(HallucError, ArithmeticError):
    """Non-finite values fed into a numerical operation."""


class DivergenceError(HallucError, RuntimeError):
    """Training produced a non-finite loss; aborted with diagnostics."""


class FormatError(HallucError, ValueError):
    """On-disk artifact (dataset, checkpoint, pool) fails validation."""


class SelectionError(HallucError, ValueError):
    """Candidate selection request is inconsistent with the pool."""
