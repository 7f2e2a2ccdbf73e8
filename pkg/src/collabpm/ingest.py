"""Reading and writing collaboration logs as XES (subset) and flat CSV.

XES input only needs the event-level attributes ``concept:name``,
``time:timestamp``, ``participant`` and, for messages, ``elemType`` plus one
of ``fromParticipant``/``toParticipant``.  Any other event attribute is kept
as a string in ``Event.extra`` and written back unchanged.

Both writers are byte-deterministic: ISO-8601 timestamps with milliseconds
and an explicit ``+00:00`` offset, LF line endings, UTF-8.
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from collections.abc import Mapping
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from xml.sax.saxutils import quoteattr

from collabpm import errors
from collabpm.model import (
    MSG_NAME,
    Direction,
    ElemType,
    Event,
    EventLog,
    Trace,
    validate_log,
)

_INTERPRETED = {"concept:name", "time:timestamp", "participant", "elemType", "fromParticipant", "toParticipant"}


def format_timestamp(ts: datetime) -> str:
    return ts.isoformat(timespec="milliseconds")


def parse_timestamp(value: str, fmt: str | None = None) -> datetime:
    """Parse ISO-8601 (or ``fmt`` via strptime). Raises ValueError."""
    if fmt is not None:
        return datetime.strptime(value, fmt)
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def _make_event(
    case_id: str,
    activity: str,
    timestamp: datetime,
    participant: str,
    elem_type: str | None,
    from_participant: str | None,
    to_participant: str | None,
    extra: Mapping[str, str],
    where: str,
) -> Event:
    if from_participant and to_participant:
        raise errors.BothFromAndTo(f"{where}: both fromParticipant and toParticipant are set")
    kind = ElemType.MESSAGE if (elem_type or "").strip().lower() == "message" else ElemType.USER
    if from_participant:
        direction, counterpart = Direction.RECEIVE, from_participant
    elif to_participant:
        direction, counterpart = Direction.SEND, to_participant
    else:
        direction, counterpart = Direction.NONE, None
    return Event(
        case_id=case_id,
        activity=activity,
        timestamp=timestamp,
        participant=participant,
        elem_type=kind,
        direction=direction,
        counterpart=counterpart,
        extra=extra,
    )


# -- XES -------------------------------------------------------------------


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _attributes(element: ET.Element) -> tuple[dict[str, str], dict[str, str]]:
    """Split direct child attributes into (string-like, date) maps."""
    strings: dict[str, str] = {}
    dates: dict[str, str] = {}
    for child in element:
        tag = _local(child.tag)
        key = child.get("key")
        if key is None or tag in ("trace", "event", "global", "extension", "classifier"):
            continue
        value = child.get("value", "")
        if tag == "date":
            dates[key] = value
        else:
            # int/float/boolean/id are kept verbatim as strings
            strings[key] = value
    return strings, dates


def parse_xes(document: bytes | str) -> EventLog:
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise errors.MalformedXml(str(exc)) from exc
    if _local(root.tag) != "log":
        raise errors.MalformedXml(f"root element is <{_local(root.tag)}>, expected <log>")

    traces = []
    for t_index, t_elem in enumerate(c for c in root if _local(c.tag) == "trace"):
        t_strings, _ = _attributes(t_elem)
        case_id = t_strings.get("concept:name")
        if not case_id:
            raise errors.MissingConceptName(f"trace {t_index} has no concept:name")
        events = []
        for e_index, e_elem in enumerate(c for c in t_elem if _local(c.tag) == "event"):
            where = f"case {case_id!r}, event {e_index}"
            strings, dates = _attributes(e_elem)
            activity = strings.get("concept:name")
            if not activity:
                raise errors.MissingConceptName(f"{where} has no concept:name")
            raw_ts = dates.get("time:timestamp") or strings.get("time:timestamp")
            if raw_ts is None:
                raise errors.MissingTimestamp(f"{where} has no time:timestamp")
            try:
                timestamp = parse_timestamp(raw_ts)
            except ValueError as exc:
                raise errors.MissingTimestamp(f"{where}: unreadable time:timestamp {raw_ts!r}") from exc
            extra = {k: v for k, v in strings.items() if k not in _INTERPRETED}
            extra.update((k, v) for k, v in dates.items() if k not in _INTERPRETED)
            events.append(
                _make_event(
                    case_id,
                    activity,
                    timestamp,
                    strings.get("participant", ""),
                    strings.get("elemType"),
                    strings.get("fromParticipant"),
                    strings.get("toParticipant"),
                    extra,
                    where,
                )
            )
        traces.append(Trace(case_id, tuple(events)))
    log = EventLog(tuple(traces))
    validate_log(log)
    return log


def _xes_attr(tag: str, key: str, value: str) -> str:
    return f"<{tag} key={quoteattr(key)} value={quoteattr(value)}/>"


def write_xes(log: EventLog) -> bytes:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<log xes.version="1.0" xmlns="http://www.xes-standard.org/">',
        '  <extension name="Concept" prefix="concept" uri="http://www.xes-standard.org/concept.xesext"/>',
        '  <extension name="Time" prefix="time" uri="http://www.xes-standard.org/time.xesext"/>',
    ]
    for trace in log.traces:
        lines.append("  <trace>")
        lines.append("    " + _xes_attr("string", "concept:name", trace.case_id))
        for e in trace.events:
            lines.append("    <event>")
            attrs = [
                ("string", "concept:name", e.activity),
                ("date", "time:timestamp", format_timestamp(e.timestamp)),
                ("string", "participant", e.participant),
                ("string", "elemType", e.elem_type.value),
            ]
            if e.direction is Direction.RECEIVE:
                attrs.append(("string", "fromParticipant", e.counterpart or ""))
            elif e.direction is Direction.SEND:
                attrs.append(("string", "toParticipant", e.counterpart or ""))
            attrs.extend(("string", k, e.extra[k]) for k in sorted(e.extra))
            lines.extend("      " + _xes_attr(*a) for a in attrs)
            lines.append("    </event>")
        lines.append("  </trace>")
    lines.append("</log>")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- CSV -------------------------------------------------------------------

CANONICAL_FIELDS = (
    "case",
    "activity",
    "timestamp",
    "participant",
    "elemType",
    "fromParticipant",
    "toParticipant",
    "msgName",
)
MANDATORY_FIELDS = ("case", "activity", "timestamp", "participant")


@dataclass(frozen=True)
class ColumnMapping:
    """Canonical field name -> source column name, plus a timestamp format.

    ``timestamp_format=None`` means ISO-8601.  Optional fields may be left
    out of ``columns`` entirely.
    """

    columns: Mapping[str, str] = field(
        default_factory=lambda: {
            "case": "case_id",
            "activity": "activity",
            "timestamp": "timestamp",
            "participant": "participant",
            "elemType": "elemType",
            "fromParticipant": "fromParticipant",
            "toParticipant": "toParticipant",
            "msgName": "msgName",
        }
    )
    timestamp_format: str | None = None

    def __post_init__(self) -> None:
        unknown = set(self.columns) - set(CANONICAL_FIELDS)
        if unknown:
            raise ValueError(f"unknown canonical fields in mapping: {sorted(unknown)}")
        missing = [f for f in MANDATORY_FIELDS if f not in self.columns]
        if missing:
            raise ValueError(f"mapping lacks mandatory fields: {missing}")

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> ColumnMapping:
        data = dict(data)
        fmt = data.pop("timestamp_format", None)
        columns = data.pop("columns", data)
        return cls(columns=dict(columns), timestamp_format=fmt)  # type: ignore[arg-type]

    def ordered(self) -> list[tuple[str, str]]:
        return [(f, self.columns[f]) for f in CANONICAL_FIELDS if f in self.columns]


def parse_csv(document: bytes | str, mapping: ColumnMapping | None = None) -> EventLog:
    mapping = mapping or ColumnMapping()
    text = document.decode("utf-8-sig") if isinstance(document, bytes) else document
    reader = csv.DictReader(io.StringIO(text, newline=""))
    header = reader.fieldnames or []
    for f in MANDATORY_FIELDS:
        if mapping.columns[f] not in header:
            raise errors.MissingColumn(mapping.columns[f])
    mapped_columns = set(mapping.columns.values())
    col = mapping.columns.get

    grouped: dict[str, list[tuple[datetime, int, Event]]] = {}
    for i, row in enumerate(reader, start=1):
        raw_ts = row[mapping.columns["timestamp"]] or ""
        try:
            timestamp = parse_timestamp(raw_ts, mapping.timestamp_format)
        except ValueError as exc:
            raise errors.UnparseableTimestamp(i, raw_ts) from exc

        def cell(name: str) -> str | None:
            column = col(name)
            return (row.get(column) or None) if column is not None else None

        extra = {k: v for k, v in row.items() if k not in mapped_columns and k is not None and v}
        msg_name = cell("msgName")
        if msg_name:
            extra[MSG_NAME] = msg_name
        case_id = row[mapping.columns["case"]] or ""
        event = _make_event(
            case_id,
            row[mapping.columns["activity"]] or "",
            timestamp,
            row[mapping.columns["participant"]] or "",
            cell("elemType"),
            cell("fromParticipant"),
            cell("toParticipant"),
            extra,
            f"row {i}",
        )
        grouped.setdefault(case_id, []).append((event.timestamp, i, event))

    traces = tuple(
        Trace(case_id, tuple(e for _, _, e in sorted(rows, key=lambda r: (r[0], r[1]))))
        for case_id, rows in grouped.items()
    )
    log = EventLog(traces)
    validate_log(log)
    return log


def write_csv(log: EventLog, mapping: ColumnMapping | None = None) -> bytes:
    """Serialize ``log``; columns follow the mapping, then sorted extra keys.

    Empty extra values cannot be told apart from absent ones in CSV and are
    dropped on the way back in.
    """
    mapping = mapping or ColumnMapping()
    ordered = mapping.ordered()
    has_msg_column = "msgName" in mapping.columns
    extra_keys = sorted(
        {k for e in log.events() for k in e.extra if not (has_msg_column and k == MSG_NAME)}
    )
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow([column for _, column in ordered] + extra_keys)
    for trace in log.traces:
        for e in trace.events:
            values = {
                "case": e.case_id,
                "activity": e.activity,
                "timestamp": (
                    format_timestamp(e.timestamp)
                    if mapping.timestamp_format is None
                    else e.timestamp.strftime(mapping.timestamp_format)
                ),
                "participant": e.participant,
                "elemType": e.elem_type.value,
                "fromParticipant": e.counterpart if e.direction is Direction.RECEIVE else "",
                "toParticipant": e.counterpart if e.direction is Direction.SEND else "",
                "msgName": e.extra.get(MSG_NAME, ""),
            }
            writer.writerow([values[f] or "" for f, _ in ordered] + [e.extra.get(k, "") for k in extra_keys])
    return buf.getvalue().encode("utf-8")


def read_log(path, fmt: str | None = None, mapping: ColumnMapping | None = None) -> EventLog:
    """Read a log file, choosing the format from ``fmt`` or the file suffix."""
    path = Path(path)
    fmt = fmt or guess_format(path)
    data = path.read_bytes()
    return parse_xes(data) if fmt == "xes" else parse_csv(data, mapping)


def dump_log(log: EventLog, fmt: str, mapping: ColumnMapping | None = None) -> bytes:
    return write_xes(log) if fmt == "xes" else write_csv(log, mapping)


def guess_format(path) -> str:
    return "xes" if str(path).lower().endswith(".xes") else "csv"
