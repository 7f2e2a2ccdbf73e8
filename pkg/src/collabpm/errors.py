"""Exception hierarchy shared by every collabpm module.

The CLI reports failures by class name, so the names below are part of the
public interface and should not be renamed casually.
"""

from __future__ import annotations


class CollabError(Exception):
    """Base class for domain errors (CLI exit code 1)."""

    @property
    def name(self) -> str:
        return type(self).__name__


# -- validation ------------------------------------------------------------


class ValidationError(CollabError):
    pass


class EmptyField(ValidationError):
    pass


class UserEventWithCounterpart(ValidationError):
    pass


class MessageEventMissingCounterpart(ValidationError):
    pass


class InvalidDirection(ValidationError):
    """Direction does not agree with the element type."""


class SelfMessage(ValidationError):
    pass


class ReservedAttribute(ValidationError):
    """A pass-through attribute reuses a name the log formats interpret."""


class EmptyTrace(ValidationError):
    pass


class CaseIdMismatch(ValidationError):
    pass


class NonMonotoneTimestamps(ValidationError):
    def __init__(self, case_id: str, position: int) -> None:
        super().__init__(f"case {case_id!r}: timestamp decreases at position {position}")
        self.case_id = case_id
        self.position = position


class DuplicateCaseId(ValidationError):
    pass


# -- ingest ----------------------------------------------------------------


class ParseError(CollabError):
    pass


class MalformedXml(ParseError):
    pass


class MissingConceptName(ParseError):
    pass


class MissingTimestamp(ParseError):
    pass


class BothFromAndTo(ParseError):
    pass


class MissingColumn(ParseError):
    def __init__(self, column: str) -> None:
        super().__init__(f"missing column {column!r}")
        self.column = column


class UnparseableTimestamp(ParseError):
    def __init__(self, row: int, value: str) -> None:
        super().__init__(f"row {row}: cannot parse timestamp {value!r}")
        self.row = row
        self.value = value


# -- merge / views / tasks -------------------------------------------------


class ConflictingEvent(CollabError):
    pass


class UnknownParticipant(CollabError):
    def __init__(self, participant: str) -> None:
        super().__init__(f"participant {participant!r} does not occur in the log")
        self.participant = participant


class InvalidTask(CollabError):
    pass


# -- predict ---------------------------------------------------------------


class EmptyAfterView(CollabError):
    pass


class EmptyDataset(CollabError):
    pass


class PrefixEmptyInView(CollabError):
    pass


class ModelVersionMismatch(CollabError):
    pass


class ModelTaskMismatch(CollabError):
    pass


# -- simulate --------------------------------------------------------------


class ModelError(CollabError):
    """Structurally invalid collaboration model."""


class ModelDeadlock(ModelError):
    pass


class UnknownModel(CollabError):
    pass
