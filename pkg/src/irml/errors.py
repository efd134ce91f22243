"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`IrmlError`.
The three intermediate classes map onto the CLI exit codes (2, 3 and 4).
"""


class IrmlError(Exception):
    exit_code = 4


class ConfigError(IrmlError, ValueError):
    """Bad configuration. ``errors`` lists ``(key, line, message)`` when known."""

    exit_code = 2

    def __init__(self, message="", errors=None):
        super().__init__(message)
        self.errors = list(errors) if errors else []


class DataError(IrmlError):
    exit_code = 3


class NumericalError(IrmlError, RuntimeError):
    exit_code = 4


class ParseError(DataError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class EmptyGraphError(DataError):
    pass


class MissingIdError(IrmlError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing id"


class SamplingExhaustedError(NumericalError):
    pass


class TrainingError(NumericalError):
    pass


class DecodeError(NumericalError):
    pass


class DeadEndError(IrmlError):
    pass
