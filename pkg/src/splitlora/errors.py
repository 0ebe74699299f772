"""Exception hierarchy shared by every module."""


class SplitLoraError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(SplitLoraError, ValueError):
    """Non-finite or otherwise unusable numeric input."""


class ShapeError(SplitLoraError, ValueError):
    pass


class DegenerateSpectrum(SplitLoraError, ValueError):
    """Spectrum sums to zero so ratios of singular mass are undefined."""


class InvalidK(SplitLoraError, ValueError):
    pass


class EmptyDataset(SplitLoraError, ValueError):
    pass


class EmptyStream(SplitLoraError, ValueError):
    pass


class ProtocolError(SplitLoraError, RuntimeError):
    """Tasks were presented out of order."""


class ParseError(SplitLoraError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class InvalidLabels(SplitLoraError, ValueError):
    pass


class ConfigError(SplitLoraError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
