"""Exception types raised across the baseband engine."""


class OpenIsacError(Exception):
    """Base class for all package errors."""


class ConfigError(OpenIsacError):
    """Base class for configuration problems."""


class MissingKey(ConfigError):
    def __init__(self, key):
        super().__init__(f"missing required config key: {key}")
        self.key = key


class InvalidValue(ConfigError):
    def __init__(self, key, message):
        super().__init__(f"invalid value for {key}: {message}")
        self.key = key


class InvariantViolation(ConfigError):
    def __init__(self, name, message):
        super().__init__(f"invariant '{name}' violated: {message}")
        self.name = name


class UnknownKey(ConfigError):
    def __init__(self, key):
        super().__init__(f"unknown config key: {key}")
        self.key = key


class NotCoprime(OpenIsacError):
    pass


class ZeroSeed(OpenIsacError):
    pass


class LengthMismatch(OpenIsacError):
    pass


class MatrixFileInvalid(OpenIsacError):
    pass


class Overflow(OpenIsacError):
    pass


class NonPositiveRange(OpenIsacError):
    pass


class DelayExceedsCp(OpenIsacError):
    """Raised (or warned) when a path delay exceeds the cyclic prefix."""


class ZeroSymbolCell(OpenIsacError):
    pass


class UnstableFilter(OpenIsacError):
    pass


class WindowOutOfRange(OpenIsacError):
    pass


class StreamTooShort(OpenIsacError):
    pass


class SingularNormalEquations(OpenIsacError):
    pass


class ZeroPeak(OpenIsacError):
    pass


class InsufficientFrames(OpenIsacError):
    pass


class FormatError(OpenIsacError):
    """Malformed binary record (bad magic, truncated payload, ...)."""


class ParseError(OpenIsacError):
    pass


class BindFailure(OpenIsacError):
    pass
