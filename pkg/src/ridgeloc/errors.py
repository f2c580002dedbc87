"""Exception hierarchy shared by all solvers and I/O helpers."""


class LocalizationError(Exception):
    """Base class for every error raised by ridgeloc."""


class DimensionError(LocalizationError, ValueError):
    pass


class NonFiniteError(LocalizationError, ValueError):
    pass


class DepthDegenerate(LocalizationError):
    """The point sits (numerically) on a camera's principal plane."""

    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class InsufficientViews(LocalizationError):
    pass


class DegenerateGeometry(LocalizationError):
    pass


class Diverged(LocalizationError):
    pass


class StationCoincidence(LocalizationError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateSpread(LocalizationError):
    pass


class InsufficientRows(LocalizationError):
    pass


class SingularSystem(LocalizationError):
    pass


class GeometryInfeasible(LocalizationError, ValueError):
    pass


class UnboundedError(LocalizationError, ValueError):
    pass


class EmptyCell(LocalizationError):
    pass


class InsufficientData(LocalizationError):
    pass


class ConfigError(LocalizationError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownKey(ConfigError):
    pass


class SchemaError(LocalizationError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class InsufficientRangedRows(LocalizationError):
    pass
