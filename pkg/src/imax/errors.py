"""Exception types raised by imax."""


class ImaxError(Exception):
    """Base class for library errors."""


class GraphFormatError(ImaxError, ValueError):
    """Malformed edge-list input.  ``lineno`` is 1-based, or None when not line-specific."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class DomainError(ImaxError, ValueError):
    """A value is outside the range an operation accepts."""


class PreconditionError(ImaxError, ValueError):
    """An operation was called in a state it does not support."""


class CyclicGraphError(ImaxError):
    """Exact path-sum oracles only accept acyclic inputs."""


class SharedEdgeError(ImaxError):
    """Source-to-target paths share an edge; the closed-form IC product does not apply."""

    def __init__(self, message, edge=None):
        self.edge = edge
        super().__init__(message)
