class HODTError(Exception):
    """Base class for errors raised by this package."""


class DimensionTooLargeError(HODTError, ValueError):
    pass


class InvalidParamsError(HODTError, ValueError):
    pass


class CorruptModelError(HODTError, ValueError):
    pass


class InfeasibleConfigurationError(HODTError, ValueError):
    """A configuration containing a crossed pair was passed where a feasible one is required."""


class CSVParseError(HODTError, ValueError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")
