"""Exception hierarchy shared across the package."""


class ScpganError(Exception):
    pass


class LengthMismatch(ScpganError, ValueError):
    pass


class ShapeMismatch(ScpganError, ValueError):
    pass


class InvalidParams(ScpganError, ValueError):
    pass


class TooShort(ScpganError, ValueError):
    pass


class ParamMismatch(ScpganError, ValueError):
    pass


class AllSilent(ScpganError, ValueError):
    pass


class NonFinite(ScpganError, FloatingPointError):
    pass


class NotScalar(ScpganError, ValueError):
    pass


class MissingGrad(ScpganError, ValueError):
    pass


class ModeMismatch(ScpganError, ValueError):
    pass


class SilentClean(ScpganError, ValueError):
    pass


class BadHeader(ScpganError, ValueError):
    pass


class UnsupportedFormat(ScpganError, ValueError):
    pass


class Truncated(ScpganError, ValueError):
    pass


class EmptyCorpus(ScpganError, ValueError):
    pass


class BadCheckpoint(ScpganError, ValueError):
    pass


class ConfigError(ScpganError, ValueError):
    """Raised with a dotted field path, e.g. ``mode.sc``."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
