"""Exception types shared by all modules."""


class MvdictError(Exception):
    """Base class for errors raised by mvdict."""


class ConfigError(MvdictError, ValueError):
    """Invalid parameters, grids or incompatible inputs."""


class ShapeError(MvdictError, ValueError):
    """Arrays whose shapes do not agree."""


class ParseError(MvdictError, ValueError):
    """Malformed file contents."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SolverError(MvdictError, RuntimeError):
    """A linear system could not be solved."""


class RangeError(MvdictError, IndexError):
    """An index, onset or shift falls outside the admissible range."""
