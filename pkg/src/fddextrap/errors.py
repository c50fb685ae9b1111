"""Exception types shared across the package."""


class OutOfRangeError(ValueError):
    """A frequency, angle or index falls outside the valid span."""


class ConfigError(ValueError):
    """Invalid experiment or estimator configuration.

    ``key_path`` names the offending entry, e.g. ``"estimators[1].num_paths"``.
    """

    def __init__(self, message, key_path=None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class NumericalError(ArithmeticError):
    """A computation is undefined for the given data (zero norm, singular divisor)."""
