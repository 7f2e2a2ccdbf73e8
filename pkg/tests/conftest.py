from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest
from hypothesis import strategies as st

from collabpm import (
    Direction,
    ElemType,
    Event,
    EventLog,
    SimConfig,
    Trace,
    builtin_model,
    load_model,
    simulate,
)

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"
T0 = datetime(2024, 3, 1, 9, 0, tzinfo=timezone.utc)


def at(seconds: float) -> datetime:
    return T0 + timedelta(seconds=seconds)


def user(case: str, activity: str, t: float, participant: str) -> Event:
    return Event(case, activity, at(t), participant)


def send(case: str, activity: str, t: float, participant: str, to: str) -> Event:
    return Event(case, activity, at(t), participant, ElemType.MESSAGE, Direction.SEND, to)


def recv(case: str, activity: str, t: float, participant: str, frm: str) -> Event:
    return Event(case, activity, at(t), participant, ElemType.MESSAGE, Direction.RECEIVE, frm)


def model_file(name: str):
    return load_model(DATA / f"{name}.yaml")


@pytest.fixture(scope="session")
def healthcare():
    return builtin_model("healthcare")


@pytest.fixture(scope="session")
def buyer_reseller():
    return builtin_model("buyer_reseller")


@pytest.fixture(scope="session")
def healthcare_log(healthcare):
    return simulate(healthcare, SimConfig(n_cases=60, seed=3))


@pytest.fixture(scope="session")
def buyer_log(buyer_reseller):
    return simulate(buyer_reseller, SimConfig(n_cases=40, seed=5))


def small_log(model, max_events: int = 200, seed: int = 11) -> EventLog:
    """Whole simulated traces, as many as fit in ``max_events`` events."""
    full = simulate(model, SimConfig(n_cases=max_events, seed=seed))
    kept, total = [], 0
    for t in full.traces:
        if total + len(t) > max_events:
            break
        kept.append(t)
        total += len(t)
    return EventLog(tuple(kept))


# -- hypothesis strategies for arbitrary valid logs ---------------------------

_names = st.sampled_from(["Buyer", "Reseller", "Lab", "Gyn", "Org,A", 'Q"uote'])
_labels = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Cn")) | st.sampled_from([",", '"', "<", "&", "\n"]),
    min_size=1,
    max_size=8,
)
_extra_keys = st.sampled_from(["org:resource", "cost", "lifecycle:note", "msgName"])


@st.composite
def events_for(draw, case_id: str, start_ms: int):
    n = draw(st.integers(1, 6))
    gaps = draw(st.lists(st.integers(0, 5000), min_size=n, max_size=n))
    out, t = [], start_ms
    for gap in gaps:
        t += gap
        participant = draw(_names)
        kind = draw(st.sampled_from(["user", "send", "receive"]))
        extra = draw(st.dictionaries(_extra_keys, _labels, max_size=2))
        ts = T0 + timedelta(milliseconds=t)
        if kind == "user":
            out.append(Event(case_id, draw(_labels), ts, participant, extra=extra))
        else:
            other = draw(_names.filter(lambda p: p != participant))
            d = Direction.SEND if kind == "send" else Direction.RECEIVE
            out.append(Event(case_id, draw(_labels), ts, participant, ElemType.MESSAGE, d, other, extra))
    return out


@st.composite
def valid_logs(draw, max_traces: int = 4):
    n = draw(st.integers(0, max_traces))
    traces = []
    for i in range(n):
        events = draw(events_for(f"c{i}", draw(st.integers(0, 10_000))))
        traces.append(Trace(f"c{i}", tuple(events)))
    return EventLog(tuple(traces))


def all_tasks(log: EventLog):
    """Every valid task for ``log``: each kind, scope, direction and argument."""
    from collabpm.tasks import ARGUMENT_KINDS, DIRECTIONAL_KINDS, MESSAGE_TARGET_KINDS, PredictionTask, TaskKind
    from collabpm.views import Content, DirectionFilter, ViewSpec

    out = []
    for kind in TaskKind:
        directions = list(DirectionFilter) if kind in DIRECTIONAL_KINDS else [DirectionFilter.ANY]
        if kind is TaskKind.PARTICIPANT_WILL_APPEAR:
            arguments = sorted(log.participants) + ["Nobody"]
        elif kind is TaskKind.MESSAGE_WILL_OCCUR:
            arguments = sorted(log.message_labels) + ["no such message"]
        else:
            arguments = [None]
        for scope in [None, *sorted(log.participants)]:
            for d in directions:
                for content in Content:
                    if kind in MESSAGE_TARGET_KINDS and d is DirectionFilter.ANY and content is Content.ALL:
                        continue
                    for arg in arguments:
                        out.append(PredictionTask(kind, ViewSpec(scope, content, d), arg))
    return out
