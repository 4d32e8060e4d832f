class MeterXAIError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 2


class DataError(MeterXAIError, ValueError):
    """Malformed, inconsistent or missing input data."""

    exit_code = 2


class NumericError(MeterXAIError, ArithmeticError):
    """A numerical procedure failed (singular system, separation, non-finite output)."""

    exit_code = 3
