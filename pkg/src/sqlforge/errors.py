"""Exception types shared across the package."""

from __future__ import annotations


class SqlforgeError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SqlforgeError):
    """Malformed input file (catalog JSON, lcov tracefile, ...)."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc += f" [{path}"
            loc += f":{line}]" if line is not None else "]"
        elif line is not None:
            loc += f" [line {line}]"
        super().__init__(message + loc)


class ValidationError(SqlforgeError):
    """Structurally valid input violating a documented invariant."""


class EmptyCatalog(SqlforgeError):
    """Sampling attempted from a catalog with no features."""


class BackendError(SqlforgeError):
    """Base class for text-generation backend failures."""


class TransportError(BackendError):
    """Network-level failure talking to a live backend."""


class ProtocolError(BackendError):
    """Backend answered but the response body is not understood."""


class BackendRefusal(BackendError):
    """Backend returned an empty or blocked completion."""


class PatternError(SqlforgeError):
    """A feature syntax pattern could not be instantiated."""


class NoSqlFound(SqlforgeError):
    """Raw generation output contained no recognizable SQL statement."""


class SynthesisFailure(SqlforgeError):
    """All synthesis attempts for one test case were exhausted."""


class EmptyStatement(SqlforgeError):
    """An empty string was passed where a SQL statement is required."""


class UnterminatedLiteral(SqlforgeError):
    """Tokenizer hit end of input inside a quoted literal."""


class NotApplicable(SqlforgeError):
    """A mutation rule was applied to a case it cannot transform."""


class UnknownDialect(SqlforgeError):
    """No rules are registered for the requested dialect."""


class NoUntriedAction(SqlforgeError):
    """Expansion requested on a node with no unexplored actions."""


class SearchExhausted(SqlforgeError):
    """Every trajectory in the search tree is pruned or fully expanded.

    Carries the partial ``result`` accumulated before exhaustion so the
    caller can keep the work done up to that point.
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class EmptySeedPool(SqlforgeError):
    """Mutation requested with no seed cases available."""


class DriverUnavailable(SqlforgeError):
    """The target DBMS driver cannot be started."""


class UniverseMismatch(SqlforgeError):
    """Two coverage snapshots disagree on the instrumented universe."""


class ConfigError(SqlforgeError):
    """Invalid campaign configuration."""
