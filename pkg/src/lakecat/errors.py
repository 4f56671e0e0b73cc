"""Exception hierarchy for the catalog.

Every error carries a stable ``code`` string; the HTTP gateway maps codes to
status codes one-to-one, so library callers and API clients see the same
vocabulary.
"""

from __future__ import annotations


class CatalogError(Exception):
    """Base class for all catalog errors."""

    code = "catalog-error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


# --- medal-core ---------------------------------------------------------


class DuplicateType(CatalogError):
    code = "duplicate-type"


class InvalidAttributeSpec(CatalogError):
    code = "invalid-attribute-spec"


class ValidationFailed(CatalogError):
    code = "validation-failed"

    def __init__(self, violations, message: str = ""):
        self.violations = list(violations)
        detail = "; ".join(f"{name}: {kind}" for name, kind in self.violations)
        super().__init__(message or f"entity does not conform to its type ({detail})")


class DuplicateQualifiedName(CatalogError):
    code = "duplicate-qualified-name"


class UnknownType(CatalogError):
    code = "unknown-type"


class NotFound(CatalogError):
    code = "not-found"


class DuplicateClassification(CatalogError):
    code = "duplicate-classification"


class UnknownParent(CatalogError):
    code = "unknown-parent"


class CycleDetected(CatalogError):
    code = "cycle-detected"


# --- thesaurus ----------------------------------------------------------


class DuplicateThesaurus(CatalogError):
    code = "duplicate-thesaurus"


class UnknownThesaurus(CatalogError):
    code = "unknown-thesaurus"


class CrossThesaurusParent(CatalogError):
    code = "cross-thesaurus-parent"


class ParentIsTerm(CatalogError):
    code = "parent-is-term"


class DuplicateLabel(CatalogError):
    code = "duplicate-label"


class UnknownTerm(CatalogError):
    code = "unknown-term"


class SelfRelation(CatalogError):
    code = "self-relation"


class DuplicateRelation(CatalogError):
    code = "duplicate-relation"


class ThesaurusParseError(CatalogError):
    """Interchange document rejected; ``path`` points at the offending node."""

    code = "thesaurus-parse-error"

    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


class InvariantViolation(CatalogError):
    code = "invariant-violation"


# --- lineage ------------------------------------------------------------


class UnknownEntity(CatalogError):
    code = "unknown-entity"


class InputsEqualOutputs(CatalogError):
    code = "inputs-equal-outputs"


# --- query --------------------------------------------------------------


class QuerySyntaxError(CatalogError):
    """Parse failure; ``position`` is a 0-based offset into the query text."""

    code = "query-syntax-error"

    def __init__(self, position: int, expected: str, message: str = ""):
        self.position = position
        self.expected = expected
        super().__init__(message or f"syntax error at position {position}: expected {expected}")


class CursorInvalid(CatalogError):
    code = "cursor-invalid"


# --- store --------------------------------------------------------------


class StorageFailure(CatalogError):
    code = "storage-failure"


class PayloadInvalid(CatalogError):
    code = "payload-invalid"


class CorruptLog(CatalogError):
    code = "corrupt-log"

    def __init__(self, seq: int, message: str = ""):
        self.seq = seq
        super().__init__(message or f"corrupt event log record at seq {seq}")


class CorruptSnapshot(CatalogError):
    code = "corrupt-snapshot"


class UnknownIndex(CatalogError):
    code = "unknown-index"


# --- ingest -------------------------------------------------------------


class Unreadable(CatalogError):
    code = "unreadable"


class PathOutsideRoot(CatalogError):
    code = "path-outside-root"


class WatchRootVanished(CatalogError):
    code = "watch-root-vanished"


class QueueFull(CatalogError):
    code = "queue-full"


class IngestParseError(CatalogError):
    """Source document (delimited file or SQL dump) rejected."""

    code = "ingest-parse-error"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


# --- processing ---------------------------------------------------------


class NoData(CatalogError):
    code = "no-data"


class DecodeError(CatalogError):
    code = "decode-error"

    def __init__(self, offset: int, message: str = ""):
        self.offset = offset
        super().__init__(message or f"undecodable byte at offset {offset}")


class UnsupportedEncoding(CatalogError):
    code = "unsupported-encoding"


class UnknownTable(CatalogError):
    code = "unknown-table"


class UnknownColumn(CatalogError):
    code = "unknown-column"


class DuplicateOutput(CatalogError):
    code = "duplicate-output"


# --- security -----------------------------------------------------------


class AccessDenied(CatalogError):
    code = "access-denied"

    def __init__(self, reason: str = "default-deny", stage: int | None = None):
        self.reason = reason
        self.stage = stage
        where = f" (stage {stage})" if stage is not None else ""
        super().__init__(f"access denied{where}: {reason}")


class DuplicatePrincipal(CatalogError):
    code = "duplicate-principal"


class DuplicateRole(CatalogError):
    code = "duplicate-role"


class DuplicatePolicy(CatalogError):
    code = "duplicate-policy"


# --- gateway ------------------------------------------------------------


class ConfigInvalid(CatalogError):
    code = "config-invalid"


class BindFailure(CatalogError):
    code = "bind-failure"
