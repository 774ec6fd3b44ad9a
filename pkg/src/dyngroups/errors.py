"""Exception hierarchy shared by every stage."""


class DynGroupsError(Exception):
    """Base class for all package errors."""


class ConfigError(DynGroupsError, ValueError):
    """Invalid configuration. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class InvalidInputError(DynGroupsError, ValueError):
    pass


class MissingPersonError(DynGroupsError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing person"


class InconsistencyError(DynGroupsError, ValueError):
    """Data that references nodes or persons that do not exist."""


class ScoreParseError(DynGroupsError, ValueError):
    def __init__(self, message: str, lines: tuple[int, ...] = ()):
        self.lines = lines
        super().__init__(message)


class UndefinedModularityError(DynGroupsError, ValueError):
    """Raised when the graph has zero total edge weight."""


class SizeLimitError(DynGroupsError, ValueError):
    pass
