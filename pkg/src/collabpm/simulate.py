"""Seeded discrete-event simulation of message-exchanging participants.

A collaboration model gives every participant a block-structured process:
user tasks, message sends and receives, exclusive choices (XOR) and parallel
blocks (AND split with an implicit join at the end of the block).  Sends
never block; a receive waits until the matching message (same name, same
sender) has arrived.  A participant whose process opens with a receive is
only instantiated when that message arrives, the way a BPMN message start
event behaves; if it never arrives, the participant simply does not take part
in the case.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence`` with one
spawned substream per case (and one for case arrivals), so a case's behaviour
depends only on ``(model, seed, case index)``.  Only raw 64-bit draws are
used and transformed here, which keeps the output identical across numpy
versions and platforms.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import defaultdict
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np
import yaml

from collabpm import errors
from collabpm.merge import interleave
from collabpm.model import Direction, ElemType, Event, EventLog, Trace, validate_log

RNG_NAME = "pcg64-seedsequence/1"
MODEL_FORMAT = "collab-model/1"
BUILTIN_MODELS = ("buyer_reseller", "healthcare")

_ARRIVAL_STREAM = 0
_CASE_STREAM = 1


# -- delays -------------------------------------------------------------------


class CaseRandom:
    """Uniform draws from the raw output of a PCG64 substream."""

    def __init__(self, seed: int, *key: int) -> None:
        seq = np.random.SeedSequence(entropy=seed, spawn_key=key)
        self._bits = np.random.PCG64(seq)

    def uniform(self) -> float:
        """Double in [0, 1) built from the top 53 bits of one draw."""
        return (int(self._bits.random_raw()) >> 11) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class Fixed:
    ms: int

    def sample(self, rng: CaseRandom) -> int:
        return self.ms

    def floor(self) -> int:
        return self.ms


@dataclass(frozen=True)
class Uniform:
    low: int
    high: int

    def sample(self, rng: CaseRandom) -> int:
        return self.low + math.floor(rng.uniform() * (self.high - self.low + 1))

    def floor(self) -> int:
        return self.low


@dataclass(frozen=True)
class Exponential:
    mean: float

    def sample(self, rng: CaseRandom) -> int:
        return round(-self.mean * math.log1p(-rng.uniform()))

    def floor(self) -> int:
        return 0


Delay = Union[Fixed, Uniform, Exponential]
ZERO = Fixed(0)


def parse_delay(spec: object, where: str) -> Delay:
    if spec is None:
        return ZERO
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Fixed(int(spec))
    if isinstance(spec, Mapping) and len(spec) == 1:
        (kind, value), = spec.items()
        if kind == "fixed":
            return Fixed(int(value))
        if kind == "uniform" and isinstance(value, Sequence) and len(value) == 2:
            low, high = int(value[0]), int(value[1])
            if 0 <= low <= high:
                return Uniform(low, high)
        if kind == "exponential" and float(value) > 0:
            return Exponential(float(value))
    raise errors.ModelError(f"{where}: bad delay {spec!r} (use fixed, uniform [a, b] or exponential mean, in ms)")


# -- model ----------------------------------------------------------------------


@dataclass(frozen=True)
class UserStep:
    activity: str
    delay: Delay = ZERO


@dataclass(frozen=True)
class SendStep:
    message: str
    to: str
    activity: str
    delay: Delay = ZERO
    transit: Delay = ZERO


@dataclass(frozen=True)
class ReceiveStep:
    message: str
    sender: str
    activity: str
    delay: Delay = ZERO


@dataclass(frozen=True)
class XorBranch:
    options: tuple[tuple[float, tuple[Step, ...]], ...]


@dataclass(frozen=True)
class AndSplit:
    branches: tuple[tuple[Step, ...], ...]


Step = Union[UserStep, SendStep, ReceiveStep, XorBranch, AndSplit]


@dataclass(frozen=True)
class CollabModel:
    name: str
    processes: Mapping[str, tuple[Step, ...]]
    reconstructed: tuple[str, ...] = field(default=(), compare=False)

    @property
    def participants(self) -> list[str]:
        return list(self.processes)


def _walk(steps: Sequence[Step]) -> Iterator[Step]:
    for step in steps:
        yield step
        if isinstance(step, XorBranch):
            for _, sub in step.options:
                yield from _walk(sub)
        elif isinstance(step, AndSplit):
            for sub in step.branches:
                yield from _walk(sub)


def _parse_steps(raw: object, participant: str, path: str, notes: list[str]) -> tuple[Step, ...]:
    if not isinstance(raw, list):
        raise errors.ModelError(f"{path}: expected a list of steps")
    steps: list[Step] = []
    for i, item in enumerate(raw):
        where = f"{path}[{i}]"
        if not isinstance(item, Mapping):
            raise errors.ModelError(f"{where}: a step must be a mapping")
        delay = parse_delay(item.get("delay"), where)
        if item.get("reconstructed"):
            notes.append(where)
        if "user" in item:
            steps.append(UserStep(str(item["user"]), delay))
        elif "send" in item:
            if "to" not in item:
                raise errors.ModelError(f"{where}: send step needs 'to'")
            msg = str(item["send"])
            steps.append(
                SendStep(msg, str(item["to"]), str(item.get("activity", msg)), delay, parse_delay(item.get("transit"), where))
            )
        elif "receive" in item:
            if "from" not in item:
                raise errors.ModelError(f"{where}: receive step needs 'from'")
            msg = str(item["receive"])
            steps.append(ReceiveStep(msg, str(item["from"]), str(item.get("activity", msg)), delay))
        elif "xor" in item:
            options = []
            for j, opt in enumerate(item["xor"]):
                if not isinstance(opt, Mapping) or "p" not in opt:
                    raise errors.ModelError(f"{where}.xor[{j}]: option needs 'p' and 'steps'")
                options.append(
                    (float(opt["p"]), _parse_steps(opt.get("steps", []), participant, f"{where}.xor[{j}]", notes))
                )
            steps.append(XorBranch(tuple(options)))
        elif "and" in item:
            branches = tuple(
                _parse_steps(b, participant, f"{where}.and[{j}]", notes) for j, b in enumerate(item["and"])
            )
            steps.append(AndSplit(branches))
        else:
            raise errors.ModelError(f"{where}: unknown step {sorted(item)}")
    return tuple(steps)


def model_from_dict(doc: Mapping) -> CollabModel:
    if doc.get("format") != MODEL_FORMAT:
        raise errors.ModelError(f"unsupported model format {doc.get('format')!r}; expected {MODEL_FORMAT}")
    raw = doc.get("participants")
    if not isinstance(raw, Mapping) or not raw:
        raise errors.ModelError("model needs a non-empty 'participants' mapping")
    notes: list[str] = []
    processes = {str(p): _parse_steps(steps, str(p), str(p), notes) for p, steps in raw.items()}
    model = CollabModel(str(doc.get("name", "unnamed")), processes, tuple(notes))
    check_model(model)
    return model


def load_model(source: str | Path | bytes) -> CollabModel:
    """Load a model from YAML text/bytes or a file path."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.decode("utf-8") if isinstance(source, bytes) else source
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise errors.ModelError(f"model file is not valid YAML: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise errors.ModelError("model file must contain a mapping")
    return model_from_dict(doc)


def builtin_model(name: str) -> CollabModel:
    if name not in BUILTIN_MODELS:
        raise errors.UnknownModel(f"unknown model {name!r}; builtins: {', '.join(BUILTIN_MODELS)}")
    text = resources.files("collabpm").joinpath(f"models/{name}.yaml").read_text(encoding="utf-8")
    return load_model(text)


def resolve_model(name_or_path: str) -> CollabModel:
    if name_or_path in BUILTIN_MODELS:
        return builtin_model(name_or_path)
    path = Path(name_or_path)
    if not path.is_file():
        raise errors.UnknownModel(
            f"{name_or_path!r} is neither a builtin ({', '.join(BUILTIN_MODELS)}) nor a model file"
        )
    return load_model(path)


# -- static checks ------------------------------------------------------------------


def check_model(model: CollabModel) -> None:
    """Validate probabilities and message pairing, then prove deadlock freedom.

    Deadlock freedom is checked by running every combination of XOR choices
    with minimal delays.  Receives match by name and sender rather than by
    arrival order and sends never block, so one schedule per combination
    decides whether every started participant can finish.
    """
    names = set(model.processes)
    sends: dict[tuple[str, str, str], int] = defaultdict(int)
    receives: dict[tuple[str, str, str], int] = defaultdict(int)
    for p, steps in model.processes.items():
        for step in _walk(steps):
            if isinstance(step, XorBranch):
                if not step.options:
                    raise errors.ModelError(f"{p}: empty XOR")
                total = sum(prob for prob, _ in step.options)
                if any(prob < 0 for prob, _ in step.options) or abs(total - 1.0) > 1e-9:
                    raise errors.ModelError(f"{p}: XOR probabilities sum to {total}, not 1")
            elif isinstance(step, SendStep):
                if step.to not in names or step.to == p:
                    raise errors.ModelError(f"{p}: send {step.message!r} to unknown or same participant {step.to!r}")
                sends[(p, step.to, step.message)] += 1
            elif isinstance(step, ReceiveStep):
                if step.sender not in names or step.sender == p:
                    raise errors.ModelError(
                        f"{p}: receive {step.message!r} from unknown or same participant {step.sender!r}"
                    )
                receives[(step.sender, p, step.message)] += 1
    for key in sends:
        if receives.get(key, 0) != 1:
            sender, receiver, msg = key
            raise errors.ModelError(
                f"send {msg!r} {sender}->{receiver} needs exactly one matching receive, found {receives.get(key, 0)}"
            )
    for key in receives:
        if key not in sends:
            sender, receiver, msg = key
            raise errors.ModelError(f"{receiver} receives {msg!r} from {sender}, who never sends it")

    for _ in _choice_combinations(model):
        pass


_CHECK_START = datetime(2000, 1, 1, tzinfo=timezone.utc)


class _Scripted:
    """XOR chooser replaying a fixed choice sequence, then picking option 0."""

    def __init__(self, script: Sequence[int]) -> None:
        self.script = list(script)
        self.seen: list[int] = []  # option count at each decision

    def choose(self, options: Sequence[tuple[float, object]]) -> int:
        i = len(self.seen)
        self.seen.append(len(options))
        return self.script[i] if i < len(self.script) else 0


def _choice_combinations(model: CollabModel, limit: int = 100_000) -> Iterator[tuple[int, ...]]:
    stack: list[tuple[int, ...]] = [()]
    explored = 0
    while stack:
        script = stack.pop()
        chooser = _Scripted(script)
        _run_case(model, chooser, _CHECK_START, "check", minimal=True)
        explored += 1
        if explored > limit:
            raise errors.ModelError(f"more than {limit} XOR combinations; model too large to check")
        yield script
        taken = list(script) + [0] * (len(chooser.seen) - len(script))
        for i in range(len(script), len(chooser.seen)):
            for alt in range(1, chooser.seen[i]):
                stack.append(tuple(taken[:i]) + (alt,))


# -- engine -------------------------------------------------------------------------


@dataclass(frozen=True)
class _Emit:
    kind: ElemType
    direction: Direction
    activity: str
    counterpart: str | None
    delay: Delay
    step: Step


@dataclass(frozen=True)
class _Fork:
    branches: tuple[tuple[Step, ...], ...]


class _RandomChooser:
    def __init__(self, rng: CaseRandom, report: Callable[[int], None] | None = None) -> None:
        self.rng = rng
        self.report = report

    def choose(self, options: Sequence[tuple[float, object]]) -> int:
        u = self.rng.uniform()
        acc = 0.0
        pick = None
        for i, (prob, _) in enumerate(options):
            acc += prob
            if u < acc:
                pick = i
                break
        if pick is None:
            # rounding left u beyond the last cumulative bound
            pick = max(i for i, (prob, _) in enumerate(options) if prob > 0)
        if self.report is not None:
            self.report(pick)
        return pick


def _program(steps: Sequence[Step], chooser) -> Iterator[object]:
    for step in steps:
        if isinstance(step, UserStep):
            yield _Emit(ElemType.USER, Direction.NONE, step.activity, None, step.delay, step)
        elif isinstance(step, SendStep):
            yield _Emit(ElemType.MESSAGE, Direction.SEND, step.activity, step.to, step.delay, step)
        elif isinstance(step, ReceiveStep):
            yield _Emit(ElemType.MESSAGE, Direction.RECEIVE, step.activity, step.sender, step.delay, step)
        elif isinstance(step, XorBranch):
            _, sub = step.options[chooser.choose(step.options)]
            yield from _program(sub, chooser)
        elif isinstance(step, AndSplit):
            yield _Fork(step.branches)


class _Token:
    __slots__ = ("participant", "program", "parent", "pending")

    def __init__(self, participant: str, program: Iterator[object], parent: _Token | None) -> None:
        self.participant = participant
        self.program = program
        self.parent = parent
        self.pending = 0  # children still running, for fork tokens


def _run_case(
    model: CollabModel,
    chooser,
    start: datetime,
    case_id: str,
    rng: CaseRandom | None = None,
    minimal: bool = False,
) -> Trace | None:
    """Simulate one case; returns None when no participant emitted anything."""

    def draw(d: Delay) -> int:
        return d.floor() if minimal or rng is None else d.sample(rng)

    seq = itertools.count()
    heap: list[tuple[int, int, _Token, _Emit]] = []
    last: dict[str, int] = {}
    emitted: dict[str, list[Event]] = defaultdict(list)
    mailbox: dict[tuple[str, str, str], list[int]] = defaultdict(list)
    waiting: dict[tuple[str, str, str], list[tuple[_Token, _Emit]]] = defaultdict(list)

    def schedule(token: _Token, cmd: _Emit, at: int) -> None:
        heapq.heappush(heap, (at, next(seq), token, cmd))

    def advance(token: _Token, now: int) -> None:
        while True:
            try:
                cmd = next(token.program)
            except StopIteration:
                parent = token.parent
                if parent is not None:
                    parent.pending -= 1
                    if parent.pending == 0:
                        token = parent
                        continue
                return
            if isinstance(cmd, _Fork):
                children = [b for b in cmd.branches if b]
                if not children:
                    continue
                token.pending = len(children)
                for branch in children:
                    advance(_Token(token.participant, _program(branch, chooser), token), now)
                return
            if cmd.direction is Direction.RECEIVE:
                key = (cmd.counterpart, token.participant, cmd.step.message)
                if mailbox[key]:
                    arrival = mailbox[key].pop(0)
                    schedule(token, cmd, max(now, arrival) + draw(cmd.delay))
                else:
                    waiting[key].append((token, cmd))
                return
            schedule(token, cmd, now + draw(cmd.delay))
            return

    for p, steps in model.processes.items():
        advance(_Token(p, _program(steps, chooser), None), 0)

    while heap:
        at, _, token, cmd = heapq.heappop(heap)
        p = token.participant
        if p in last and at <= last[p]:
            # one event per millisecond per participant
            schedule(token, cmd, last[p] + 1)
            continue
        last[p] = at
        emitted[p].append(
            Event(
                case_id=case_id,
                activity=cmd.activity,
                timestamp=start + timedelta(milliseconds=at),
                participant=p,
                elem_type=cmd.kind,
                direction=cmd.direction,
                counterpart=cmd.counterpart,
            )
        )
        if cmd.direction is Direction.SEND:
            step = cmd.step
            arrival = at + draw(step.transit)
            key = (p, step.to, step.message)
            if waiting[key]:
                w_token, w_cmd = waiting[key].pop(0)
                schedule(w_token, w_cmd, arrival + draw(w_cmd.delay))
            else:
                mailbox[key].append(arrival)
        advance(token, at)

    stuck = sorted({tok.participant for ws in waiting.values() for tok, _ in ws if tok.participant in emitted})
    orphans = sorted(f"{s}->{r}:{m}" for (s, r, m), arrivals in mailbox.items() if arrivals)
    if stuck or orphans:
        raise errors.ModelDeadlock(
            f"model {model.name!r}: participants blocked on receive {stuck}, undelivered messages {orphans}"
        )
    if not emitted:
        return None
    return Trace(case_id, tuple(interleave([emitted[p] for p in sorted(emitted)])))


# -- public entry point ------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    n_cases: int = 100
    seed: int = 0
    inter_arrival: Delay = Exponential(3_600_000)
    start: datetime = datetime(2024, 1, 1, tzinfo=timezone.utc)

    def __post_init__(self) -> None:
        if self.n_cases < 0:
            raise ValueError("n_cases must be >= 0")


def case_id_for(index: int) -> str:
    return f"case_{index + 1}"


def simulate(
    model: CollabModel,
    cfg: SimConfig,
    on_choice: Callable[[int, int], None] | None = None,
) -> EventLog:
    """Generate ``cfg.n_cases`` collaborative cases.

    ``on_choice(case_index, option)`` is called for every XOR decision, which
    lets tests measure branch frequencies without parsing the log.
    """
    arrivals = CaseRandom(cfg.seed, _ARRIVAL_STREAM)
    offset = 0
    traces = []
    for i in range(cfg.n_cases):
        if i:
            offset += cfg.inter_arrival.sample(arrivals)
        rng = CaseRandom(cfg.seed, _CASE_STREAM, i)
        report = None if on_choice is None else (lambda option, _i=i: on_choice(_i, option))
        chooser = _RandomChooser(rng, report)
        trace = _run_case(model, chooser, cfg.start + timedelta(milliseconds=offset), case_id_for(i), rng)
        if trace is not None:
            traces.append(trace)
    log = EventLog(tuple(traces))
    validate_log(log)
    return log
