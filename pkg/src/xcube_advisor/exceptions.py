"""Exception hierarchy shared by every stage of the advisor."""


class AdvisorError(Exception):
    """Base class for all errors raised by this package."""


class XMLParseError(AdvisorError, ValueError):
    """Malformed XML input. Carries the 1-based line and 0-based column."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class SchemaValidationError(AdvisorError, ValueError):
    """A document or value violates the warehouse schema contract."""


class IntegrityError(AdvisorError, ValueError):
    """Cross-reference failure between warehouse documents or artifacts."""


class QuerySyntaxError(AdvisorError, ValueError):
    """The query text cannot be parsed. ``position`` is a character offset."""

    def __init__(self, message, position=None, text=None, query_id=None):
        self.position = position
        self.query_id = query_id
        self.line = self.column = None
        if position is not None and text is not None:
            self.line = text.count("\n", 0, position) + 1
            self.column = position - (text.rfind("\n", 0, position) + 1) + 1
            message = f"{message} at line {self.line}, column {self.column}"
        if query_id is not None:
            message = f"[{query_id}] {message}"
        super().__init__(message)


class UnsupportedConstructError(QuerySyntaxError):
    """Valid XQuery that falls outside the supported decision-support dialect."""

    def __init__(self, construct, position=None, text=None, query_id=None):
        self.construct = construct
        super().__init__(
            f"unsupported construct: {construct}", position, text, query_id
        )


class NotAnswerableError(AdvisorError, ValueError):
    """A query was evaluated against a view that cannot answer it."""
