import pytest
from hypothesis import HealthCheck, given, settings

from collabpm import SimConfig, errors, simulate
from collabpm.ingest import ColumnMapping, parse_csv, parse_xes, write_csv, write_xes
from collabpm.model import Direction, ElemType, EventLog, Trace
from conftest import DATA, user, valid_logs

XES_HEAD = '<?xml version="1.0" encoding="UTF-8"?><log xes.version="1.0" xmlns="http://www.xes-standard.org/">'


def xes(*events: str, case: str = "c1") -> bytes:
    body = "".join(f"<event>{e}</event>" for e in events)
    return f'{XES_HEAD}<trace><string key="concept:name" value="{case}"/>{body}</trace></log>'.encode()


def ev(name: str, ts: str = "2024-01-01T10:00:00.000+00:00", **attrs: str) -> str:
    parts = [f'<string key="concept:name" value="{name}"/>', f'<date key="time:timestamp" value="{ts}"/>']
    parts += [f'<string key="{k}" value="{v}"/>' for k, v in attrs.items()]
    return "".join(parts)


def test_message_receive_from_xes():
    log = parse_xes(
        xes(ev("Receive blood sample", participant="Laboratory", elemType="message", fromParticipant="Gynecologist"))
    )
    (e,) = log.traces[0].events
    assert e.elem_type is ElemType.MESSAGE
    assert e.direction is Direction.RECEIVE
    assert e.counterpart == "Gynecologist"


def test_elem_type_is_case_insensitive():
    log = parse_xes(xes(ev("m1", participant="Buyer", elemType="MESSAGE", toParticipant="Reseller")))
    e = log.traces[0].events[0]
    assert (e.elem_type, e.direction, e.counterpart) == (ElemType.MESSAGE, Direction.SEND, "Reseller")


def test_missing_elem_type_means_user():
    e = parse_xes(xes(ev("place order", participant="Buyer"))).traces[0].events[0]
    assert (e.elem_type, e.direction, e.counterpart) == (ElemType.USER, Direction.NONE, None)


def test_both_from_and_to():
    doc = xes(ev("m", participant="A", elemType="message", fromParticipant="B", toParticipant="C"))
    with pytest.raises(errors.BothFromAndTo):
        parse_xes(doc)


def test_xes_errors():
    with pytest.raises(errors.MalformedXml):
        parse_xes(b"<log><trace>")
    with pytest.raises(errors.MissingConceptName):
        parse_xes(f"{XES_HEAD}<trace><event/></trace></log>".encode())
    with pytest.raises(errors.MissingConceptName):
        parse_xes(xes('<string key="participant" value="A"/>'))
    with pytest.raises(errors.MissingTimestamp):
        parse_xes(xes('<string key="concept:name" value="a"/><string key="participant" value="A"/>'))


def test_xes_validation_errors_propagate():
    with pytest.raises(errors.UserEventWithCounterpart):
        parse_xes(xes(ev("a", participant="A", toParticipant="B")))
    with pytest.raises(errors.MessageEventMissingCounterpart):
        parse_xes(xes(ev("a", participant="A", elemType="message")))
    with pytest.raises(errors.EmptyField):
        parse_xes(xes(ev("a")))


def test_unknown_attributes_are_kept():
    doc = xes(
        ev("a", participant="A", **{"org:resource": "Ann"})
        + '<int key="cost" value="12"/><date key="planned" value="2024-01-02T00:00:00.000+00:00"/>'
    )
    e = parse_xes(doc).traces[0].events[0]
    assert dict(e.extra) == {"org:resource": "Ann", "cost": "12", "planned": "2024-01-02T00:00:00.000+00:00"}


def test_zulu_timestamps():
    e = parse_xes(xes(ev("a", ts="2024-01-01T10:00:00Z", participant="A"))).traces[0].events[0]
    assert e.timestamp.isoformat() == "2024-01-01T10:00:00+00:00"


def test_write_xes_empty_log():
    doc = write_xes(EventLog())
    assert b"<trace>" not in doc
    assert parse_xes(doc) == EventLog()


def test_write_xes_single_event():
    log = EventLog((Trace("c1", (user("c1", "a", 0, "P"),)),))
    doc = write_xes(log)
    assert doc.count(b"<trace>") == 1
    assert doc.count(b"<event>") == 1
    assert parse_xes(doc) == log


CSV_4_ROWS = b"""case_id,activity,timestamp,participant,elemType,toParticipant,fromParticipant,note
c2,m1,2024-01-01T10:00:05.000+00:00,Reseller,message,,Buyer,x
c1,place order,2024-01-01T09:00:00.000+00:00,Buyer,user,,,
c2,place order,2024-01-01T10:00:00.000+00:00,Buyer,,,,
c1,m1,2024-01-01T09:00:01.000+00:00,Buyer,message,Reseller,,
"""


def test_csv_grouping_matches_naive_oracle():
    log = parse_csv(CSV_4_ROWS)
    # oracle: bucket rows by case in first-seen order, then sort by timestamp
    rows = [line.split(",") for line in CSV_4_ROWS.decode().splitlines()[1:]]
    buckets: dict[str, list[list[str]]] = {}
    for r in rows:
        buckets.setdefault(r[0], []).append(r)
    expected = {c: [r[1] for r in sorted(rs, key=lambda r: r[2])] for c, rs in buckets.items()}
    assert [t.case_id for t in log.traces] == list(buckets)
    assert {t.case_id: [e.activity for e in t.events] for t in log.traces} == expected
    assert [len(t) for t in log.traces] == [2, 2]
    recv = log.traces[0].events[1]
    assert (recv.direction, recv.counterpart, dict(recv.extra)) == (Direction.RECEIVE, "Buyer", {"note": "x"})


def test_csv_stable_for_ties():
    doc = b"case_id,activity,timestamp,participant\nc,b,2024-01-01T00:00:00Z,P\nc,a,2024-01-01T00:00:00Z,P\n"
    assert [e.activity for e in parse_csv(doc).traces[0]] == ["b", "a"]


def test_csv_header_only():
    assert parse_csv(b"case_id,activity,timestamp,participant\n") == EventLog()


def test_csv_bad_timestamp():
    doc = b"case_id,activity,timestamp,participant\nc,a,not-a-date,P\n"
    with pytest.raises(errors.UnparseableTimestamp) as info:
        parse_csv(doc)
    assert info.value.row == 1


def test_csv_missing_column():
    with pytest.raises(errors.MissingColumn) as info:
        parse_csv(b"case_id,activity,participant\n")
    assert info.value.column == "timestamp"


def test_csv_custom_mapping_and_format():
    mapping = ColumnMapping(
        {"case": "Case ID", "activity": "Task", "timestamp": "When", "participant": "Org", "elemType": "Kind",
         "toParticipant": "To"},
        timestamp_format="%d/%m/%Y %H:%M",
    )
    doc = b"Case ID,Task,When,Org,Kind,To\n7,send order,02/01/2024 09:30,Buyer,message,Reseller\n"
    log = parse_csv(doc, mapping)
    e = log.traces[0].events[0]
    assert (e.case_id, e.direction, e.counterpart, e.timestamp.day) == ("7", Direction.SEND, "Reseller", 2)
    assert parse_csv(write_csv(log, mapping), mapping) == log


def test_csv_mapping_requires_mandatory_fields():
    with pytest.raises(ValueError):
        ColumnMapping({"case": "c", "activity": "a", "timestamp": "t"})


def test_write_csv_empty_log_is_header_only():
    assert write_csv(EventLog()) == (
        b"case_id,activity,timestamp,participant,elemType,fromParticipant,toParticipant,msgName\n"
    )


def test_write_csv_is_deterministic(healthcare_log):
    assert write_csv(healthcare_log) == write_csv(healthcare_log)
    assert write_xes(healthcare_log) == write_xes(healthcare_log)


def test_simulated_round_trips(healthcare_log, buyer_log):
    for log in (healthcare_log, buyer_log):
        assert parse_xes(write_xes(log)) == log
        assert parse_csv(write_csv(log)) == log


@settings(max_examples=150, suppress_health_check=[HealthCheck.too_slow])
@given(valid_logs())
def test_round_trip_property(log):
    assert parse_xes(write_xes(log)) == log
    assert parse_csv(write_csv(log)) == log
    # extras other than msgName survive without a msgName column too
    bare = ColumnMapping({"case": "case_id", "activity": "activity", "timestamp": "timestamp",
                          "participant": "participant", "elemType": "elemType",
                          "fromParticipant": "fromParticipant", "toParticipant": "toParticipant"})
    assert parse_csv(write_csv(log, bare), bare) == log


def test_committed_example_files_agree():
    xes_log = parse_xes((DATA / "healthcare_sample.xes").read_bytes())
    csv_log = parse_csv((DATA / "healthcare_sample.csv").read_bytes())
    assert xes_log == csv_log
    from conftest import builtin_model

    assert xes_log == simulate(builtin_model("healthcare"), SimConfig(n_cases=5, seed=42))
