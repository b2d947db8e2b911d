class DiffTSPError(Exception):
    """Base class for all errors raised by difftsp."""


class InvalidSizeError(DiffTSPError, ValueError):
    pass


class DimensionError(DiffTSPError, ValueError):
    pass


class DomainError(DiffTSPError, ValueError):
    pass


class InvalidTourError(DiffTSPError, ValueError):
    pass


class MoveError(DiffTSPError, ValueError):
    pass


class SizeLimitError(DiffTSPError, ValueError):
    pass


class TimestepError(DiffTSPError, ValueError):
    pass


class ConfigError(DiffTSPError, ValueError):
    pass


class DataError(DiffTSPError, ValueError):
    pass


class CheckpointFormatError(DiffTSPError, ValueError):
    pass


class UnsupportedFormatError(DiffTSPError, ValueError):
    def __init__(self, edge_weight_type):
        self.edge_weight_type = edge_weight_type
        super().__init__(f"unsupported EDGE_WEIGHT_TYPE {edge_weight_type!r}")


class TsplibParseError(DiffTSPError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
