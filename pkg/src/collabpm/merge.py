"""Merging participant logs into a collaboration log, and splitting back.

Cases are correlated across inputs by exact ``case_id`` equality.  Within a
case, each participant's events form one stream whose order is never changed;
streams are interleaved by timestamp, and equal timestamps are broken by
(send < receive < user, participant name).
"""

from __future__ import annotations

import heapq
import re
from collections.abc import Iterable, Sequence

from collabpm import errors
from collabpm.model import Direction, ElemType, Event, EventLog, Trace, validate_log

_KIND_RANK = {Direction.SEND: 0, Direction.RECEIVE: 1, Direction.NONE: 2}


def tie_rank(e: Event) -> int:
    if e.elem_type is ElemType.USER:
        return 2
    return _KIND_RANK[e.direction]


def case_sort_key(case_id: str) -> tuple:
    """Natural order, so ``case_9`` sorts before ``case_10``."""
    parts = tuple(int(p) if i % 2 else p for i, p in enumerate(re.split(r"(\d+)", case_id)))
    return parts, case_id


def interleave(streams: Iterable[Sequence[Event]]) -> list[Event]:
    """k-way merge of per-participant streams under the tie policy.

    Each stream must already be in timestamp order; it is consumed front to
    back, so relative order inside a stream is preserved.
    """
    heap = []
    for idx, stream in enumerate(streams):
        if stream:
            e = stream[0]
            heap.append((e.timestamp, tie_rank(e), e.participant, idx, 0, stream))
    heapq.heapify(heap)
    merged: list[Event] = []
    while heap:
        _, _, _, idx, pos, stream = heapq.heappop(heap)
        merged.append(stream[pos])
        pos += 1
        if pos < len(stream):
            e = stream[pos]
            heapq.heappush(heap, (e.timestamp, tie_rank(e), e.participant, idx, pos, stream))
    return merged


def _streams(events: Iterable[Event]) -> list[list[Event]]:
    by_participant: dict[str, list[Event]] = {}
    for e in events:
        by_participant.setdefault(e.participant, []).append(e)
    # stable: keeps input order among equal timestamps
    return [sorted(evs, key=lambda e: e.timestamp) for _, evs in sorted(by_participant.items())]


def merge_logs(parts: Sequence[EventLog]) -> EventLog:
    """Build one collaboration log from several (participant) logs.

    Output traces are sorted by case id (natural order).  An event that
    appears in two different inputs with identical fields is reported as a
    ``ConflictingEvent`` instead of being dropped.
    """
    for part in parts:
        validate_log(part)

    per_case: dict[str, list[Event]] = {}
    origin: dict[str, dict[Event, int]] = {}
    for part_index, part in enumerate(parts):
        for trace in part.traces:
            seen = origin.setdefault(trace.case_id, {})
            bucket = per_case.setdefault(trace.case_id, [])
            for e in trace.events:
                first = seen.setdefault(e, part_index)
                if first != part_index:
                    raise errors.ConflictingEvent(
                        f"case {trace.case_id!r}: event {e!r} appears in inputs {first} and {part_index}"
                    )
                bucket.append(e)

    traces = tuple(
        Trace(case_id, tuple(interleave(_streams(per_case[case_id]))))
        for case_id in sorted(per_case, key=case_sort_key)
    )
    merged = EventLog(traces)
    validate_log(merged)
    return merged


def normalize(log: EventLog) -> EventLog:
    """Re-order a log under the tie policy; idempotent."""
    return merge_logs([log])


def split_log(collab: EventLog) -> dict[str, EventLog]:
    """One orchestration log per participant, keyed and ordered by name."""
    out: dict[str, list[Trace]] = {}
    for trace in collab.traces:
        by_participant: dict[str, list[Event]] = {}
        for e in trace.events:
            by_participant.setdefault(e.participant, []).append(e)
        for p, evs in by_participant.items():
            out.setdefault(p, []).append(Trace(trace.case_id, tuple(evs)))
    return {p: EventLog(tuple(out[p])) for p in sorted(out)}
