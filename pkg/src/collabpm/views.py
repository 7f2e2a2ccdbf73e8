"""Log views: which events of a collaboration log a predictor gets to see.

A view picks a scope (the whole process or one participant), a content
filter (all events or only messages) and a direction filter for message
events.  User events are kept whenever the content filter allows them; the
direction filter only ever removes messages.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

from collabpm import errors
from collabpm.model import Direction, Event, EventLog, Trace

log = logging.getLogger(__name__)


class Content(str, Enum):
    ALL = "all"
    MESSAGES = "messages"


class DirectionFilter(str, Enum):
    ANY = "any"
    SEND = "send"
    RECEIVE = "receive"

    def admits(self, e: Event) -> bool:
        """True for messages travelling in this direction (never for user events)."""
        if not e.is_message:
            return False
        if self is DirectionFilter.ANY:
            return True
        return e.direction is (Direction.SEND if self is DirectionFilter.SEND else Direction.RECEIVE)


@dataclass(frozen=True)
class ViewSpec:
    participant: str | None = None
    content: Content = Content.ALL
    direction: DirectionFilter = DirectionFilter.ANY

    def __post_init__(self) -> None:
        object.__setattr__(self, "content", Content(self.content))
        object.__setattr__(self, "direction", DirectionFilter(self.direction))
        if self.participant == "":
            raise ValueError("participant scope needs a participant name")

    @property
    def is_identity(self) -> bool:
        return self == ViewSpec()

    @property
    def scope(self) -> str:
        return "process" if self.participant is None else "participant"

    def keeps(self, e: Event) -> bool:
        if self.participant is not None and e.participant != self.participant:
            return False
        if e.is_message:
            return self.direction.admits(e)
        return self.content is Content.ALL

    def without_direction(self) -> ViewSpec:
        return replace(self, direction=DirectionFilter.ANY)

    def to_dict(self) -> dict:
        return {
            "participant": self.participant,
            "content": self.content.value,
            "direction": self.direction.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ViewSpec:
        return cls(
            participant=data.get("participant"),
            content=Content(data.get("content", "all")),
            direction=DirectionFilter(data.get("direction", "any")),
        )

    def __str__(self) -> str:
        scope = "process" if self.participant is None else f"participant={self.participant}"
        return f"{scope}/{self.content.value}/{self.direction.value}"


def view_trace(trace: Trace, v: ViewSpec) -> Trace | None:
    """Filtered copy of ``trace``, or None if nothing survives."""
    if v.is_identity:
        return trace
    kept = tuple(e for e in trace.events if v.keeps(e))
    if not kept:
        return None
    if len(kept) == len(trace.events):
        return trace
    return Trace(trace.case_id, kept)


def apply_view(event_log: EventLog, v: ViewSpec) -> EventLog:
    if v.participant is not None and v.participant not in event_log.participants:
        raise errors.UnknownParticipant(v.participant)
    if v.is_identity:
        return event_log
    traces = []
    for t in event_log.traces:
        viewed = view_trace(t, v)
        if viewed is not None:
            traces.append(viewed)
    dropped = len(event_log.traces) - len(traces)
    if dropped:
        log.info("view %s dropped %d empty trace(s)", v, dropped)
    return EventLog(tuple(traces))
