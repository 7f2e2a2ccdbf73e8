"""Domain types for collaboration event logs.

A collaboration log is an ordinary event log whose events additionally say
which participant enacted them and, for message events, in which direction
the message travelled and who the other side was.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from types import MappingProxyType

from collabpm import errors

MSG_NAME = "msgName"

# Attribute names the log formats interpret; they can never be pass-through.
RESERVED_ATTRIBUTES = frozenset(
    {
        "concept:name",
        "time:timestamp",
        "participant",
        "elemType",
        "fromParticipant",
        "toParticipant",
    }
)

_MS = timedelta(milliseconds=1)


class ElemType(str, Enum):
    USER = "user"
    MESSAGE = "message"


class Direction(str, Enum):
    SEND = "send"
    RECEIVE = "receive"
    NONE = "none"


def to_utc_ms(ts: datetime) -> datetime:
    """Normalize a timestamp to UTC and truncate it to whole milliseconds.

    Naive datetimes are taken to be UTC already.
    """
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    else:
        ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=ts.microsecond - ts.microsecond % 1000)


def duration_ms(start: datetime, end: datetime) -> int:
    return (end - start) // _MS


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: datetime
    participant: str
    elem_type: ElemType = ElemType.USER
    direction: Direction = Direction.NONE
    counterpart: str | None = None
    extra: Mapping[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "timestamp", to_utc_ms(self.timestamp))
        object.__setattr__(self, "elem_type", ElemType(self.elem_type))
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "extra", MappingProxyType(dict(self.extra)))

    @property
    def is_message(self) -> bool:
        return self.elem_type is ElemType.MESSAGE

    @property
    def label(self) -> str:
        """Message name if one was supplied, otherwise the activity."""
        return self.extra.get(MSG_NAME) or self.activity

    def __repr__(self) -> str:
        kind = self.direction.value if self.is_message else "user"
        return (
            f"Event({self.case_id!r}, {self.activity!r}, {self.timestamp.isoformat()}, "
            f"{self.participant!r}, {kind}, {self.counterpart!r})"
        )


@dataclass(frozen=True)
class Trace(Sequence[Event]):
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def __getitem__(self, i):  # type: ignore[override]
        return self.events[i]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def prefix(self, k: int) -> Trace:
        if not 1 <= k <= len(self.events):
            raise ValueError(f"prefix length {k} outside 1..{len(self.events)}")
        if k == len(self.events):
            return self
        return Trace(self.case_id, self.events[:k])

    @property
    def participants(self) -> frozenset[str]:
        return frozenset(e.participant for e in self.events)


@dataclass(frozen=True)
class Prefix:
    """The first ``k`` events of a trace: a running case."""

    trace: Trace
    k: int

    def __post_init__(self) -> None:
        if not 1 <= self.k <= len(self.trace):
            raise ValueError(f"prefix length {self.k} outside 1..{len(self.trace)}")

    @property
    def events(self) -> tuple[Event, ...]:
        return self.trace.events[: self.k]

    def as_trace(self) -> Trace:
        return self.trace.prefix(self.k)


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...] = ()
    participants: frozenset[str] = field(init=False, compare=False)
    activities: frozenset[str] = field(init=False, compare=False)
    message_labels: frozenset[str] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "traces", tuple(self.traces))
        events = [e for t in self.traces for e in t.events]
        object.__setattr__(self, "participants", frozenset(e.participant for e in events))
        object.__setattr__(self, "activities", frozenset(e.activity for e in events))
        object.__setattr__(
            self, "message_labels", frozenset(e.label for e in events if e.is_message)
        )

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces)

    def events(self) -> Iterator[Event]:
        for t in self.traces:
            yield from t.events

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> EventLog:
        """Group events into traces by case id, keeping first-seen case order."""
        grouped: dict[str, list[Event]] = {}
        for e in events:
            grouped.setdefault(e.case_id, []).append(e)
        return cls(tuple(Trace(cid, tuple(evs)) for cid, evs in grouped.items()))


def validate_event(e: Event) -> None:
    """Raise the matching ``ValidationError`` if ``e`` breaks an event invariant."""
    for name in ("case_id", "activity", "participant"):
        value = getattr(e, name)
        if not isinstance(value, str) or not value:
            raise errors.EmptyField(f"event field {name!r} must be a non-empty string")
    if e.elem_type is ElemType.USER:
        if e.counterpart is not None:
            raise errors.UserEventWithCounterpart(
                f"user event {e.activity!r} names counterpart {e.counterpart!r}"
            )
        if e.direction is not Direction.NONE:
            raise errors.InvalidDirection(f"user event {e.activity!r} has direction {e.direction.value}")
    else:
        if not e.counterpart:
            raise errors.MessageEventMissingCounterpart(
                f"message event {e.activity!r} of {e.participant!r} has no counterpart"
            )
        if e.direction is Direction.NONE:
            raise errors.InvalidDirection(f"message event {e.activity!r} has no direction")
        if e.counterpart == e.participant:
            raise errors.SelfMessage(f"{e.participant!r} exchanges {e.activity!r} with itself")
    bad = RESERVED_ATTRIBUTES.intersection(e.extra)
    if bad:
        raise errors.ReservedAttribute(f"extra attributes reuse reserved names: {sorted(bad)}")


def validate_trace(t: Trace) -> None:
    if not t.events:
        raise errors.EmptyTrace(f"case {t.case_id!r} has no events")
    previous = None
    for i, e in enumerate(t.events):
        validate_event(e)
        if e.case_id != t.case_id:
            raise errors.CaseIdMismatch(
                f"event {i} of case {t.case_id!r} belongs to case {e.case_id!r}"
            )
        if previous is not None and e.timestamp < previous:
            raise errors.NonMonotoneTimestamps(t.case_id, i)
        previous = e.timestamp


def validate_log(log: EventLog) -> None:
    """Raise on the first broken trace or event invariant; return None if valid.

    Alphabets are derived from the traces on construction, so they are
    consistent by construction and need no check here.
    """
    seen: set[str] = set()
    for t in log.traces:
        if t.case_id in seen:
            raise errors.DuplicateCaseId(f"case id {t.case_id!r} occurs in more than one trace")
        seen.add(t.case_id)
        validate_trace(t)
