"""Exception hierarchy. Each CLI exit code maps to one family."""


class NewsrecError(Exception):
    exit_code = 1


class ConfigError(NewsrecError, ValueError):
    exit_code = 2


class DataError(NewsrecError, ValueError):
    exit_code = 3


class NumericError(NewsrecError, ArithmeticError):
    exit_code = 4


class CheckpointMismatch(NewsrecError):
    exit_code = 5


class ShapeError(NewsrecError, ValueError):
    """Operand shapes are incompatible."""


class EmptyAttentionError(NewsrecError, ValueError):
    """Softmax requested over a fully masked row."""


class FlakinessError(NewsrecError, RuntimeError):
    """A closure that should be deterministic returned different values."""
