"""Prefix datasets, the frequency (n-gram with backoff) predictor, and evaluation.

The predictor is deliberately simple: it counts what followed each context
of the last ``n`` activities and backs off to shorter contexts when a context
has too few observations.  Any backend that can ``train`` on a ``Dataset``
and answer ``predict_state`` can replace it without touching tasks or views.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

from collabpm import errors
from collabpm.ingest import write_csv
from collabpm.model import Event, EventLog, Prefix, Trace
from collabpm.tasks import PredictionTask, Target
from collabpm.views import view_trace

SCHEMA_VERSION = 1
MODEL_FORMAT = "collabpm.frequency-model"
DATASET_FORMAT = "collabpm.dataset"

# Real tokens always carry a one-letter namespace, so these cannot collide.
START = "<start>"
_ACT, _PART, _DIR = "a:", "p:", "d:"

State = tuple[str, ...]


@dataclass(frozen=True)
class EncoderConfig:
    order: int = 3
    last_participant: bool = False
    last_direction: bool = False

    def __post_init__(self) -> None:
        if self.order < 0:
            raise ValueError("context order must be >= 0")

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "last_participant": self.last_participant,
            "last_direction": self.last_direction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> EncoderConfig:
        return cls(**data)


def encode(events: Sequence[Event], cfg: EncoderConfig) -> State:
    """Last ``cfg.order`` activities, left-padded, then the optional attributes."""
    n = cfg.order
    labels = [_ACT + e.activity for e in events[len(events) - n :]] if n else []
    state = [START] * (n - len(labels)) + labels
    last = events[-1]
    if cfg.last_participant:
        state.append(_PART + last.participant)
    if cfg.last_direction:
        state.append(_DIR + last.direction.value)
    return tuple(state)


def context(state: State, order: int, encoder_order: int) -> State:
    """Backoff key of ``state`` at ``order`` (0 is the global context)."""
    if order == 0:
        return ()
    return state[encoder_order - order :]


def log_digest(log: EventLog) -> str:
    return hashlib.sha256(write_csv(log)).hexdigest()


# -- datasets -----------------------------------------------------------------


@dataclass
class Dataset:
    rows: list[tuple[State, Target]]
    task: PredictionTask
    encoder: EncoderConfig
    source_sha256: str = ""
    excluded_undefined: int = 0
    excluded_witnessed: int = 0
    dropped_traces: int = 0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def provenance(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "encoder": self.encoder.to_dict(),
            "source_sha256": self.source_sha256,
            "rows": len(self.rows),
            "excluded_undefined": self.excluded_undefined,
            "excluded_witnessed": self.excluded_witnessed,
            "dropped_traces": self.dropped_traces,
        }

    def dumps(self) -> bytes:
        lines = [
            "{",
            f' "format": {json.dumps(DATASET_FORMAT)},',
            f' "schema_version": {SCHEMA_VERSION},',
            f' "provenance": {json.dumps(self.provenance, sort_keys=True, ensure_ascii=False)},',
            ' "rows": [',
        ]
        body = [
            "  " + json.dumps({"state": list(s), "target": t}, ensure_ascii=False) for s, t in self.rows
        ]
        lines.append(",\n".join(body))
        lines.append(" ]")
        lines.append("}")
        return ("\n".join(line for line in lines if line) + "\n").encode("utf-8")

    @classmethod
    def loads(cls, data: bytes | str) -> Dataset:
        doc = json.loads(data)
        if doc.get("format") != DATASET_FORMAT:
            raise errors.ModelVersionMismatch(f"not a dataset file (format={doc.get('format')!r})")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise errors.ModelVersionMismatch(
                f"dataset schema {doc.get('schema_version')} != supported {SCHEMA_VERSION}"
            )
        prov = doc["provenance"]
        return cls(
            rows=[(tuple(r["state"]), r["target"]) for r in doc["rows"]],
            task=PredictionTask.from_dict(prov["task"]),
            encoder=EncoderConfig.from_dict(prov["encoder"]),
            source_sha256=prov.get("source_sha256", ""),
            excluded_undefined=prov.get("excluded_undefined", 0),
            excluded_witnessed=prov.get("excluded_witnessed", 0),
            dropped_traces=prov.get("dropped_traces", 0),
        )


def _viewed_traces(log: EventLog, task: PredictionTask) -> tuple[list[Trace], int]:
    view = task.input_view
    kept = [t for t in (view_trace(tr, view) for tr in log.traces) if t is not None]
    if not kept:
        raise errors.EmptyAfterView(f"view {view} leaves no events in the log")
    return kept, len(log.traces) - len(kept)


def generate_dataset(
    log: EventLog,
    task: PredictionTask,
    encoder: EncoderConfig | None = None,
    drop_witnessed: bool = False,
) -> Dataset:
    """One row per (trace, k) with a defined target, in trace order then k.

    ``drop_witnessed`` removes outcome rows whose answer is already visible
    in the prefix.
    """
    encoder = encoder or EncoderConfig()
    traces, dropped = _viewed_traces(log, task)
    rows: list[tuple[State, Target]] = []
    undefined = witnessed = 0
    for trace in traces:
        events = trace.events
        for k in range(1, len(events) + 1):
            target = task.label(events, k)
            if target is None:
                undefined += 1
                continue
            if drop_witnessed and task.witnessed(events, k):
                witnessed += 1
                continue
            rows.append((encode(events[:k], encoder), target))
    return Dataset(
        rows=rows,
        task=task,
        encoder=encoder,
        source_sha256=log_digest(log),
        excluded_undefined=undefined,
        excluded_witnessed=witnessed,
        dropped_traces=dropped,
    )


# -- the model -------------------------------------------------------------------


def _target_type(task: PredictionTask) -> str:
    if task.numeric:
        return "numeric"
    if task.family.value == "outcome":
        return "boolean"
    return "label"


def _as_label(value: Target) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


@dataclass(frozen=True)
class Prediction:
    value: Target | float
    confidence: float | None
    distribution: dict[str, float] | None
    order_used: int
    support: int


@dataclass
class FrequencyModel:
    task: PredictionTask
    encoder: EncoderConfig
    min_count: int
    # tables[j] maps a length-j context (plus attributes) to label counts,
    # or to [n, sum, sum of squares] for numeric targets
    tables: list[dict[State, Counter | list]]
    provenance: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.encoder.order

    @property
    def numeric(self) -> bool:
        return self.task.numeric

    @property
    def target_type(self) -> str:
        return _target_type(self.task)

    def _lookup(self, state: State) -> tuple[int, Counter | list]:
        for j in range(self.order, 0, -1):
            entry = self.tables[j].get(context(state, j, self.order))
            if entry is not None and _support(entry) >= self.min_count:
                return j, entry
        return 0, self.tables[0][()]

    def predict_state(self, state: State) -> Prediction:
        j, entry = self._lookup(state)
        if self.numeric:
            n, total, _ = entry
            return Prediction(total / n, None, None, j, n)
        n = sum(entry.values())
        best = min(entry, key=lambda label: (-entry[label], label))
        dist = {label: entry[label] / n for label in sorted(entry)}
        value: Target = best
        if self.target_type == "boolean":
            value = best == "true"
        return Prediction(value, dist[best], dist, j, n)

    # serialization ---------------------------------------------------------

    def _predictor_doc(self) -> dict:
        tables = []
        for j, table in enumerate(self.tables):
            entries = []
            for ctx in sorted(table):
                entry = table[ctx]
                if self.numeric:
                    n, total, sumsq = entry
                    entries.append({"context": list(ctx), "n": n, "sum": total, "sumsq": sumsq})
                else:
                    entries.append({"context": list(ctx), "counts": dict(sorted(entry.items()))})
            tables.append(entries)
        return {
            "target": {
                "kind": self.task.kind.value,
                "argument": self.task.argument,
                "direction": self.task.direction.value,
                "type": self.target_type,
            },
            "encoder": self.encoder.to_dict(),
            "min_count": self.min_count,
            "tables": tables,
        }

    def predictor_bytes(self) -> bytes:
        """Canonical bytes of what was learned, without view or provenance."""
        return json.dumps(self._predictor_doc(), sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode()

    def dumps(self) -> bytes:
        doc = {
            "format": MODEL_FORMAT,
            "schema_version": SCHEMA_VERSION,
            "task": self.task.to_dict(),
            "provenance": self.provenance,
            "predictor": self._predictor_doc(),
        }
        return (json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=1) + "\n").encode("utf-8")

    @classmethod
    def loads(cls, data: bytes | str) -> FrequencyModel:
        doc = json.loads(data)
        if doc.get("format") != MODEL_FORMAT:
            raise errors.ModelVersionMismatch(f"not a model file (format={doc.get('format')!r})")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise errors.ModelVersionMismatch(
                f"model schema {doc.get('schema_version')} != supported {SCHEMA_VERSION}"
            )
        task = PredictionTask.from_dict(doc["task"])
        pred = doc["predictor"]
        numeric = task.numeric
        tables: list[dict] = []
        for entries in pred["tables"]:
            table: dict = {}
            for item in entries:
                ctx = tuple(item["context"])
                table[ctx] = [item["n"], item["sum"], item["sumsq"]] if numeric else Counter(item["counts"])
            tables.append(table)
        return cls(
            task=task,
            encoder=EncoderConfig.from_dict(pred["encoder"]),
            min_count=pred["min_count"],
            tables=tables,
            provenance=doc.get("provenance", {}),
        )


def _support(entry: Counter | list) -> int:
    return entry[0] if isinstance(entry, list) else sum(entry.values())


def train(dataset: Dataset, order: int | None = None, min_count: int = 1) -> FrequencyModel:
    """Count every backoff level 0..order; result does not depend on row order."""
    if not dataset.rows:
        raise errors.EmptyDataset("cannot train on an empty dataset")
    enc = dataset.encoder
    order = enc.order if order is None else order
    if not 0 <= order <= enc.order:
        raise ValueError(f"order {order} outside 0..{enc.order} (dataset context length)")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    numeric = dataset.task.numeric
    tables: list[dict] = [{} for _ in range(order + 1)]
    for state, target in dataset.rows:
        # re-cut to the trained order: drop the oldest labels
        state = state[enc.order - order :]
        for j in range(order + 1):
            key = context(state, j, order)
            if numeric:
                stats = tables[j].setdefault(key, [0, 0, 0])
                stats[0] += 1
                stats[1] += target
                stats[2] += target * target
            else:
                tables[j].setdefault(key, Counter())[_as_label(target)] += 1
    return FrequencyModel(
        task=dataset.task,
        encoder=replace(enc, order=order),
        min_count=min_count,
        tables=tables,
        provenance=dataset.provenance,
    )


def _prefix_events(prefix: Prefix | Trace | Sequence[Event]) -> Sequence[Event]:
    if isinstance(prefix, Prefix):
        return prefix.events
    if isinstance(prefix, Trace):
        return prefix.events
    return prefix


def predict(model: FrequencyModel, prefix: Prefix | Trace | Sequence[Event]) -> Prediction:
    """Predict the target for a running case given in the unfiltered collaboration view."""
    events = tuple(_prefix_events(prefix))
    view = model.task.input_view
    kept = [e for e in events if view.keeps(e)]
    if not kept:
        case = events[0].case_id if events else "?"
        raise errors.PrefixEmptyInView(f"case {case!r} has no events in view {view} yet")
    return model.predict_state(encode(kept, model.encoder))


# -- evaluation ------------------------------------------------------------------


@dataclass
class LabelScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class Metrics:
    task: str
    target_type: str
    support: int
    accuracy: float | None = None
    macro_f1: float | None = None
    per_label: dict[str, LabelScore] = field(default_factory=dict)
    mae: float | None = None
    rmse: float | None = None
    excluded_undefined: int = 0
    excluded_empty_view: int = 0

    def rows(self) -> list[tuple[str, str, str, int]]:
        out = []
        if self.target_type == "numeric":
            out.append(("mae", "", _fmt(self.mae), self.support))
            out.append(("rmse", "", _fmt(self.rmse), self.support))
        else:
            out.append(("accuracy", "", _fmt(self.accuracy), self.support))
            out.append(("macro_f1", "", _fmt(self.macro_f1), self.support))
            for label, s in self.per_label.items():
                out.append(("precision", label, _fmt(s.precision), s.support))
                out.append(("recall", label, _fmt(s.recall), s.support))
                out.append(("f1", label, _fmt(s.f1), s.support))
        out.append(("excluded_undefined", "", str(self.excluded_undefined), self.support))
        out.append(("excluded_empty_view", "", str(self.excluded_empty_view), self.support))
        return out

    def to_csv(self) -> bytes:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "label", "value", "support"])
        w.writerows(self.rows())
        return buf.getvalue().encode("utf-8")

    def to_text(self) -> str:
        lines = [f"task: {self.task}  ({self.target_type}, support={self.support})"]
        if self.target_type == "numeric":
            lines.append(f"  MAE  {_fmt(self.mae)}")
            lines.append(f"  RMSE {_fmt(self.rmse)}")
        else:
            lines.append(f"  accuracy {_fmt(self.accuracy)}   macro-F1 {_fmt(self.macro_f1)}")
            width = max([len(label) for label in self.per_label] + [5])
            lines.append(f"  {'label':<{width}}  precision  recall  f1      support")
            for label, s in self.per_label.items():
                lines.append(
                    f"  {label:<{width}}  {s.precision:9.4f}  {s.recall:6.4f}  {s.f1:6.4f}  {s.support:7d}"
                )
        lines.append(f"  excluded: undefined={self.excluded_undefined} empty-view={self.excluded_empty_view}")
        return "\n".join(lines) + "\n"


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def evaluate(
    model: FrequencyModel,
    test_log: EventLog,
    select: Callable[[State], bool] | None = None,
) -> Metrics:
    """Score ``model`` on every (prefix, target) pair of ``test_log``.

    ``select`` restricts scoring to encoded states it accepts, e.g. prefixes
    that end at a particular decision point.
    """
    data = generate_dataset(test_log, model.task, model.encoder)
    rows = [(s, t) for s, t in data.rows if select is None or select(s)]
    metrics = Metrics(
        task=model.task.name,
        target_type=model.target_type,
        support=len(rows),
        excluded_undefined=data.excluded_undefined,
        excluded_empty_view=data.dropped_traces,
    )
    if not rows:
        return metrics
    predictions = [model.predict_state(s) for s, _ in rows]
    if model.numeric:
        errs = [p.value - t for p, (_, t) in zip(predictions, rows)]
        metrics.mae = sum(abs(e) for e in errs) / len(errs)
        metrics.rmse = math.sqrt(sum(e * e for e in errs) / len(errs))
        return metrics

    gold = [_as_label(t) for _, t in rows]
    guess = [_as_label(p.value) for p in predictions]
    metrics.accuracy = sum(g == p for g, p in zip(gold, guess)) / len(gold)
    gold_counts, guess_counts = Counter(gold), Counter(guess)
    hits = Counter(g for g, p in zip(gold, guess) if g == p)
    for label in sorted(set(gold) | set(guess)):
        precision = hits[label] / guess_counts[label] if guess_counts[label] else 0.0
        recall = hits[label] / gold_counts[label] if gold_counts[label] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        metrics.per_label[label] = LabelScore(precision, recall, f1, gold_counts[label])
    metrics.macro_f1 = sum(s.f1 for s in metrics.per_label.values()) / len(metrics.per_label)
    return metrics
