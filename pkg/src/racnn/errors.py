class ShapeError(ValueError):
    """Operand dimensions do not fit together."""


class NumericError(FloatingPointError):
    """NaN or infinite values where finite ones are required."""


class CacheError(RuntimeError):
    """Backward called without (or with a stale) forward cache."""
