"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or malformed shapes."""


class ParameterError(ValueError):
    """A scalar argument or hyper-parameter is out of its valid range."""


class MonotonicityError(ValueError):
    """An update would decrease a pruning threshold."""


class StaleCacheError(RuntimeError):
    """A backward pass was given a cache from a different forward pass."""


class ModelFormatError(ValueError):
    """A serialized model file is malformed.

    Carries the byte offset at which decoding failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ConfigError(ValueError):
    """An experiment configuration failed validation."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss.

    Carries the last iteration at which the loss was still finite.
    """

    def __init__(self, message, last_finite_iteration):
        super().__init__(message)
        self.last_finite_iteration = last_finite_iteration
