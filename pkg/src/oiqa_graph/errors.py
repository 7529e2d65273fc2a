"""Exception types shared across the pipeline.

Everything raised on purpose derives from :class:`OIQAError`, so callers (and
the CLI) can separate domain failures from programming errors.
"""


class OIQAError(Exception):
    """Base class. ``stage`` names the pipeline stage once it is known."""

    stage = None

    def with_stage(self, stage):
        if self.stage is None:
            self.stage = stage
            self.args = (f"[{stage}] {self.args[0] if self.args else ''}",) + self.args[1:]
        return self


class DomainError(OIQAError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(OIQAError, ValueError):
    """Inconsistent or invalid configuration."""


class ParameterError(OIQAError, ValueError):
    """Parameter tensors missing or shaped wrongly."""


class StructuralError(OIQAError, ValueError):
    """Graph violates its structural contract."""


class InputError(OIQAError, ValueError):
    """Unusable input data (empty image, bad manifest row, ...)."""


class FormatError(OIQAError, ValueError):
    """Binary or text file does not match its declared format."""


class MetricError(OIQAError, ValueError):
    """Correlation metric undefined for the given vectors."""


class NumericError(OIQAError, ArithmeticError):
    """Non-finite values appeared during a computation."""
