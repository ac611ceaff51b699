"""
Exception hierarchy for the polyglot query engine.

Every error a user can cause derives from PolyglotError; the CLI maps those to
exit code 1 and anything else to exit code 2.
"""

from typing import Any, Dict, Optional


class PolyglotError(Exception):
    """Base class for user-facing engine errors."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def with_context(self, **extra: Any) -> "PolyglotError":
        self.context.update(extra)
        return self

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({details})"


class ValuePathError(PolyglotError):
    """Malformed dot-separated document path."""


class CoercionError(PolyglotError):
    """A value cannot be converted to the requested scalar type."""

    def __init__(self, value: Any, target: Any, column: Optional[str] = None, reason: str = ""):
        target_name = getattr(target, "name", str(target))
        message = f"cannot coerce {value!r} to {target_name}"
        if reason:
            message += f": {reason}"
        context = {"column": column} if column else {}
        super().__init__(message, context)
        self.value = value
        self.target = target
        self.column = column


class SqlSyntaxError(PolyglotError):
    """SQL text does not match the grammar."""

    def __init__(self, message: str, line: int, column: int, token: Optional[str] = None):
        super().__init__(message, {"line": line, "column": column, "token": token})
        self.line = line
        self.column = column
        self.token = token

    def __str__(self) -> str:
        where = f"line {self.line}, column {self.column}"
        if self.token is not None:
            return f"{self.message} at {where} near {self.token!r}"
        return f"{self.message} at {where}"


class ReservedWordError(SqlSyntaxError):
    """A reserved keyword was used where an identifier is required."""


class KeyExprError(PolyglotError):
    """Invalid composite-key specification or evaluation failure."""


class CatalogError(PolyglotError):
    """Generic catalog failure."""


class DuplicateObjectError(CatalogError):
    pass


class UnknownObjectError(CatalogError):
    pass


class DependencyError(CatalogError):
    """An object cannot be dropped because others depend on it."""


class InvalidOptionError(CatalogError):
    def __init__(self, option: str, message: str):
        super().__init__(f"invalid option {option!r}: {message}", {"option": option})
        self.option = option


class CatalogFormatError(CatalogError):
    """The catalog file cannot be parsed."""

    def __init__(self, message: str, byte_offset: Optional[int] = None):
        context = {"byte_offset": byte_offset} if byte_offset is not None else {}
        super().__init__(message, context)
        self.byte_offset = byte_offset


class CatalogVersionError(CatalogError):
    pass


class PipelineError(PolyglotError):
    """Unknown or malformed document-store pipeline stage."""


class StoreError(PolyglotError):
    """Failure inside a store emulator."""


class StoreUnavailableError(StoreError):
    """The store's backing data cannot be reached."""


class CursorError(PolyglotError):
    """A wrapper cursor failed while producing rows."""


class PlanningError(PolyglotError):
    pass


class UnknownColumnError(PlanningError):
    pass


class AmbiguousColumnError(PlanningError):
    pass


class TypeMismatchError(PlanningError):
    pass


class ExecutionError(PolyglotError):
    pass


class MatViewError(PolyglotError):
    pass


class TpccError(PolyglotError):
    pass
