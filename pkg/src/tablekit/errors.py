"""Domain exceptions.

Every error that can cross the API boundary derives from :class:`TableKitError`
and carries a machine-readable ``code`` used for the HTTP error envelope.
"""

from __future__ import annotations


class TableKitError(Exception):
    code = "error"


class SchemaError(TableKitError):
    """Input file or request body violates a wire schema."""

    code = "schema_violation"


class TilingError(TableKitError):
    """Grid positions uncovered or covered more than once.

    ``positions`` holds (row, col, problem) triples, problem being
    "uncovered" or "overlap".
    """

    code = "tiling_violation"

    def __init__(self, message: str, positions: list[tuple[int, int, str]] | None = None):
        super().__init__(message)
        self.positions = positions or []


class EditError(TableKitError):
    """An annotation-editor operation was rejected; the record is unchanged."""

    code = "edit_rejected"


class NotFoundError(TableKitError):
    code = "not_found"


class ConflictError(TableKitError):
    """Duplicate ids, overlapping tables, and similar state conflicts."""

    code = "conflict"


class BusyError(TableKitError):
    """A mutating job is already running for the project."""

    code = "busy"


class TrainingError(TableKitError):
    """Finetuning preconditions not met (e.g. no submitted labels)."""

    code = "nothing_to_train_on"
