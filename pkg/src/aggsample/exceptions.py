"""Exception types raised across the package."""


class AggSampleError(Exception):
    """Base class for all package errors."""


class InvalidArgument(AggSampleError, ValueError):
    pass


class ConfigurationError(AggSampleError, ValueError):
    pass


class ParseError(AggSampleError, ValueError):
    """Malformed input file or config.

    ``line`` is the 1-based line number when known, ``key`` the offending
    config key when the failure is tied to one.
    """

    def __init__(self, message, *, line=None, key=None):
        self.line = line
        self.key = key
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if key is not None:
            prefix.append(f"key '{key}'")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class DuplicateDevice(ParseError):
    pass


class IncompleteSnapshot(AggSampleError):
    pass


class MalformedPartition(AggSampleError):
    pass


class SimulationError(AggSampleError):
    """A field program failed (or produced invalid data) during a round."""

    def __init__(self, message, *, device, round):
        self.device = device
        self.round = round
        super().__init__(f"device {device}, round {round}: {message}")
