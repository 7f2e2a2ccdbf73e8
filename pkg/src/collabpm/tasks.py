"""Prediction targets for collaborative cases.

Each labeler takes a complete trace that has already been filtered through
the task's view, plus a prefix length ``k`` (1-based), and returns the value a
predictor should learn for that running case.  ``None`` stands for an
undefined target (e.g. there is no next event).

For message-oriented kinds the view's direction filter chooses which message
events count as targets; the events the predictor observes are filtered by
scope and content only.  That is what lets a Laboratory model see its own
"Receive blood sample" and learn that "Send results" follows.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

from collabpm import errors
from collabpm.model import Event, duration_ms
from collabpm.views import Content, DirectionFilter, ViewSpec

Target = bool | int | str | None

ANY = DirectionFilter.ANY


class Family(str, Enum):
    OUTCOME = "outcome"
    NUMERIC = "numeric"
    NEXT_EVENT = "next-event"


class TaskKind(str, Enum):
    PARTICIPANT_WILL_APPEAR = "participant-will-appear"
    MESSAGE_WILL_OCCUR = "message-will-occur"
    REMAINING_MESSAGES = "remaining-messages"
    TOTAL_MESSAGES = "total-messages"
    REMAINING_TIME = "remaining-time"
    TOTAL_DURATION = "total-duration"
    TIME_TO_NEXT_MESSAGE = "time-to-next-message"
    NEXT_ACTIVITY = "next-activity"
    NEXT_PARTICIPANT = "next-participant"
    NEXT_MESSAGE = "next-message"
    NEXT_MESSAGE_COUNTERPART = "next-message-counterpart"

    @property
    def family(self) -> Family:
        return _FAMILY[self]

    @property
    def numeric(self) -> bool:
        return _FAMILY[self] is Family.NUMERIC


_FAMILY = {
    TaskKind.PARTICIPANT_WILL_APPEAR: Family.OUTCOME,
    TaskKind.MESSAGE_WILL_OCCUR: Family.OUTCOME,
    TaskKind.REMAINING_MESSAGES: Family.NUMERIC,
    TaskKind.TOTAL_MESSAGES: Family.NUMERIC,
    TaskKind.REMAINING_TIME: Family.NUMERIC,
    TaskKind.TOTAL_DURATION: Family.NUMERIC,
    TaskKind.TIME_TO_NEXT_MESSAGE: Family.NUMERIC,
    TaskKind.NEXT_ACTIVITY: Family.NEXT_EVENT,
    TaskKind.NEXT_PARTICIPANT: Family.NEXT_EVENT,
    TaskKind.NEXT_MESSAGE: Family.NEXT_EVENT,
    TaskKind.NEXT_MESSAGE_COUNTERPART: Family.NEXT_EVENT,
}

# Kinds whose target is a particular message event rather than any event.
MESSAGE_TARGET_KINDS = frozenset(
    {
        TaskKind.MESSAGE_WILL_OCCUR,
        TaskKind.TIME_TO_NEXT_MESSAGE,
        TaskKind.NEXT_MESSAGE,
        TaskKind.NEXT_MESSAGE_COUNTERPART,
    }
)
# Kinds for which a direction filter is meaningful at all.
DIRECTIONAL_KINDS = MESSAGE_TARGET_KINDS | {TaskKind.REMAINING_MESSAGES, TaskKind.TOTAL_MESSAGES}
ARGUMENT_KINDS = frozenset({TaskKind.PARTICIPANT_WILL_APPEAR, TaskKind.MESSAGE_WILL_OCCUR})


@dataclass(frozen=True)
class PredictionTask:
    kind: TaskKind
    view: ViewSpec = field(default_factory=ViewSpec)
    argument: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if self.kind in ARGUMENT_KINDS and not self.argument:
            raise errors.InvalidTask(f"{self.kind.value} needs a target participant/message")
        if self.kind not in ARGUMENT_KINDS and self.argument is not None:
            raise errors.InvalidTask(f"{self.kind.value} takes no target argument")
        if self.kind not in DIRECTIONAL_KINDS and self.view.direction is not ANY:
            raise errors.InvalidTask(f"{self.kind.value} does not take a direction filter")
        if (
            self.kind in MESSAGE_TARGET_KINDS
            and self.view.content is not Content.MESSAGES
            and self.view.direction is ANY
        ):
            raise errors.InvalidTask(
                f"{self.kind.value} needs a messages-only view or a send/receive direction"
            )

    @property
    def family(self) -> Family:
        return self.kind.family

    @property
    def numeric(self) -> bool:
        return self.kind.numeric

    @property
    def direction(self) -> DirectionFilter:
        return self.view.direction

    @property
    def input_view(self) -> ViewSpec:
        """The view applied to traces before encoding and labeling."""
        return self.view.without_direction()

    def label(self, trace: Sequence[Event], k: int) -> Target:
        return LABELERS[self.kind](self, trace, k)

    def witnessed(self, trace: Sequence[Event], k: int) -> bool:
        """Outcome already visible inside the first ``k`` events."""
        if self.kind is TaskKind.PARTICIPANT_WILL_APPEAR:
            return any(e.participant == self.argument for e in trace[:k])
        if self.kind is TaskKind.MESSAGE_WILL_OCCUR:
            return any(self.direction.admits(e) and e.label == self.argument for e in trace[:k])
        return False

    @property
    def name(self) -> str:
        """Stable identifier, e.g. ``next-message-send``."""
        name = self.kind.value
        if self.view.direction is not ANY:
            name += f"-{self.view.direction.value}"
        return name

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "view": self.view.to_dict(), "argument": self.argument}

    @classmethod
    def from_dict(cls, data: dict) -> PredictionTask:
        return cls(TaskKind(data["kind"]), ViewSpec.from_dict(data["view"]), data.get("argument"))


def parse_task_name(name: str) -> tuple[TaskKind, DirectionFilter | None, str | None]:
    """Split a CLI task identifier into (kind, direction, scope).

    Accepts a bare kind (``next-activity``) optionally followed by
    ``-send``/``-receive`` and/or ``-process``/``-participant``, in that
    order: ``next-message-send``, ``remaining-time-process``.
    """
    rest = name.strip().lower()
    scope = None
    for suffix in ("process", "participant"):
        if rest.endswith("-" + suffix) and rest[: -len(suffix) - 1] in _NAMES_WITH_DIRECTION:
            rest, scope = rest[: -len(suffix) - 1], suffix
            break
    direction = None
    for suffix in ("send", "receive"):
        if rest.endswith("-" + suffix) and rest[: -len(suffix) - 1] in _KIND_NAMES:
            rest, direction = rest[: -len(suffix) - 1], DirectionFilter(suffix)
            break
    if rest not in _KIND_NAMES:
        raise errors.InvalidTask(f"unknown task {name!r}; known kinds: {', '.join(sorted(_KIND_NAMES))}")
    return TaskKind(rest), direction, scope


_KIND_NAMES = frozenset(k.value for k in TaskKind)
_NAMES_WITH_DIRECTION = _KIND_NAMES | {f"{k}-{d}" for k in _KIND_NAMES for d in ("send", "receive")}


# -- labelers ----------------------------------------------------------------
# All take the trace already in the task's input view.


def label_outcome_participant(p: str, trace: Sequence[Event], k: int) -> bool:
    return any(e.participant == p for e in trace)


def label_outcome_message(
    m: str, trace: Sequence[Event], k: int, direction: DirectionFilter = ANY
) -> bool:
    return any(direction.admits(e) and e.label == m for e in trace)


def label_remaining_messages(trace: Sequence[Event], k: int, direction: DirectionFilter = ANY) -> int:
    return sum(1 for e in trace[k:] if direction.admits(e))


def label_total_messages(trace: Sequence[Event], direction: DirectionFilter = ANY) -> int:
    return sum(1 for e in trace if direction.admits(e))


def label_remaining_time(trace: Sequence[Event], k: int) -> int:
    return duration_ms(trace[k - 1].timestamp, trace[-1].timestamp)


def label_total_duration(trace: Sequence[Event]) -> int:
    return duration_ms(trace[0].timestamp, trace[-1].timestamp)


def _next_message(trace: Sequence[Event], k: int, direction: DirectionFilter) -> Event | None:
    return next((e for e in trace[k:] if direction.admits(e)), None)


def label_time_to_next_message(
    trace: Sequence[Event], k: int, direction: DirectionFilter = ANY
) -> int | None:
    e = _next_message(trace, k, direction)
    return None if e is None else duration_ms(trace[k - 1].timestamp, e.timestamp)


def label_next_activity(trace: Sequence[Event], k: int) -> str | None:
    return trace[k].activity if k < len(trace) else None


def label_next_participant(trace: Sequence[Event], k: int) -> str | None:
    return trace[k].participant if k < len(trace) else None


def label_next_message(trace: Sequence[Event], k: int, direction: DirectionFilter = ANY) -> str | None:
    e = _next_message(trace, k, direction)
    return None if e is None else e.label


def label_next_message_counterpart(
    trace: Sequence[Event], k: int, direction: DirectionFilter = ANY
) -> str | None:
    e = _next_message(trace, k, direction)
    return None if e is None else e.counterpart


LABELERS = {
    TaskKind.PARTICIPANT_WILL_APPEAR: lambda t, tr, k: label_outcome_participant(t.argument, tr, k),
    TaskKind.MESSAGE_WILL_OCCUR: lambda t, tr, k: label_outcome_message(t.argument, tr, k, t.direction),
    TaskKind.REMAINING_MESSAGES: lambda t, tr, k: label_remaining_messages(tr, k, t.direction),
    TaskKind.TOTAL_MESSAGES: lambda t, tr, k: label_total_messages(tr, t.direction),
    TaskKind.REMAINING_TIME: lambda t, tr, k: label_remaining_time(tr, k),
    TaskKind.TOTAL_DURATION: lambda t, tr, k: label_total_duration(tr),
    TaskKind.TIME_TO_NEXT_MESSAGE: lambda t, tr, k: label_time_to_next_message(tr, k, t.direction),
    TaskKind.NEXT_ACTIVITY: lambda t, tr, k: label_next_activity(tr, k),
    TaskKind.NEXT_PARTICIPANT: lambda t, tr, k: label_next_participant(tr, k),
    TaskKind.NEXT_MESSAGE: lambda t, tr, k: label_next_message(tr, k, t.direction),
    TaskKind.NEXT_MESSAGE_COUNTERPART: lambda t, tr, k: label_next_message_counterpart(tr, k, t.direction),
}
