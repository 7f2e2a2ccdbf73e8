import csv
import json
import subprocess
import sys
from dataclasses import replace

import pytest

from collabpm import SimConfig, builtin_model, simulate
from collabpm.cli import main
from collabpm.ingest import parse_csv, parse_xes, write_csv, write_xes
from collabpm.model import EventLog, Trace
from collabpm.predict import Dataset
from conftest import GOLDEN


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def hc_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("hc")
    assert run("simulate", "--model", "healthcare", "--cases", 300, "--seed", 42, "-o", d / "train.csv",
               "--split-dir", d / "parts") == 0
    assert run("simulate", "--model", "healthcare", "--cases", 60, "--seed", 43, "-o", d / "test.csv") == 0
    return d


def test_golden_file(tmp_path):
    out = tmp_path / "g.csv"
    assert run("simulate", "--model", "healthcare", "--cases", 5, "--seed", 42, "-o", out) == 0
    assert out.read_bytes() == (GOLDEN / "healthcare_n5_seed42.csv").read_bytes()


def test_repeated_runs_identical(tmp_path):
    for fmt in ("csv", "xes"):
        a, b = tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"
        for out in (a, b):
            assert run("simulate", "--model", "buyer_reseller", "--cases", 20, "--seed", 1, "-o", out) == 0
        assert a.read_bytes() == b.read_bytes()


def test_console_script_and_exit_codes(tmp_path):
    ok = subprocess.run([sys.executable, "-m", "collabpm.cli", "simulate", "--model", "healthcare",
                         "--cases", "2", "-o", "-"], capture_output=True)
    assert ok.returncode == 0 and ok.stdout.startswith(b"case_id,")
    usage = subprocess.run([sys.executable, "-m", "collabpm.cli", "simulate"], capture_output=True)
    assert usage.returncode == 2
    bad = subprocess.run([sys.executable, "-m", "collabpm.cli", "simulate", "--model", "nope", "-o",
                          str(tmp_path / "x.csv")], capture_output=True, text=True)
    assert bad.returncode == 1 and "UnknownModel" in bad.stderr


def test_merge_split_round_trip(hc_dir, tmp_path):
    parts = sorted((hc_dir / "parts").glob("*.csv"))
    assert [p.stem for p in parts] == ["Gynecologist", "Laboratory", "Patient"]
    out = tmp_path / "merged.csv"
    assert run("merge", *parts, "-o", out) == 0
    assert out.read_bytes() == (hc_dir / "train.csv").read_bytes()
    assert run("split", hc_dir / "train.csv", "--out-dir", tmp_path / "again") == 0
    for p in parts:
        assert (tmp_path / "again" / p.name).read_bytes() == p.read_bytes()


def test_merge_xes_parts(tmp_path):
    log = simulate(builtin_model("buyer_reseller"), SimConfig(n_cases=10, seed=3))
    assert run("simulate", "--model", "buyer_reseller", "--cases", 10, "--seed", 3, "-o", tmp_path / "all.xes",
               "--split-dir", tmp_path / "p") == 0
    assert run("merge", *sorted((tmp_path / "p").glob("*.xes")), "-o", tmp_path / "m.xes") == 0
    assert parse_xes((tmp_path / "m.xes").read_bytes()) == log


def test_view(hc_dir, tmp_path, capsys):
    out = tmp_path / "lab.csv"
    assert run("view", hc_dir / "train.csv", "--participant", "Laboratory", "-o", out) == 0
    assert {e.participant for e in parse_csv(out.read_bytes()).events()} == {"Laboratory"}
    assert "dropped" in capsys.readouterr().err
    assert run("view", hc_dir / "train.csv", "--participant", "Dentist", "-o", out) == 1
    assert "UnknownParticipant" in capsys.readouterr().err


def test_dataset_row_count(hc_dir, tmp_path):
    out = tmp_path / "ds.json"
    assert run("dataset", hc_dir / "train.csv", "--task", "next-activity", "-o", out) == 0
    data = Dataset.loads(out.read_bytes())
    log = parse_csv((hc_dir / "train.csv").read_bytes())
    # next-activity is undefined exactly once per trace (at its last event)
    assert len(data) == sum(len(t) - 1 for t in log.traces)
    assert data.excluded_undefined == len(log)


def test_bad_task_and_usage(hc_dir, tmp_path, capsys):
    out = tmp_path / "x"
    assert run("dataset", hc_dir / "train.csv", "--task", "next-coffee", "-o", out) == 1
    assert "InvalidTask" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        run("dataset", hc_dir / "train.csv", "--task", "remaining-time-process", "--participant", "Patient", "-o", out)
    assert info.value.code == 2


@pytest.fixture(scope="module")
def lab_model(hc_dir):
    path = hc_dir / "lab.model.json"
    assert run("train", hc_dir / "train.csv", "--task", "next-message-send", "--participant", "Laboratory",
               "-o", path) == 0
    return path


def incomplete_log(source: EventLog) -> EventLog:
    """Three running cases cut at different points; the first stops right
    after the Laboratory received the blood sample."""
    cut = []
    for trace in source.traces:
        acts = [e.activity for e in trace]
        if "Receive blood sample" in acts and not cut:
            cut.append(Trace("case_44", tuple(trace.events[: acts.index("Receive blood sample") + 1])))
    with_lab = [t for t in source.traces if "Laboratory" in t.participants]
    cut.append(Trace("case_45", tuple(with_lab[1].events[:2])))
    cut.append(Trace("case_46", tuple(with_lab[2].events[:-1])))
    return EventLog(tuple(Trace(t.case_id, tuple(replace(e, case_id=t.case_id) for e in t)) for t in cut))


def test_predict_running_cases(hc_dir, lab_model, tmp_path, capsys):
    running = incomplete_log(parse_csv((hc_dir / "test.csv").read_bytes()))
    (tmp_path / "running.xes").write_bytes(write_xes(running))
    out = tmp_path / "pred.csv"
    assert run("predict", tmp_path / "running.xes", "--model", lab_model, "-o", out) == 0
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0] == ["case_id", "prediction", "confidence"]
    assert [r[0] for r in rows[1:]] == ["case_44", "case_45", "case_46"]
    case44 = rows[1]
    assert case44[1] == "Send results" and float(case44[2]) >= 0.99
    # case_45 has not reached the Laboratory yet
    assert rows[2][1:] == ["", ""]
    assert "PrefixEmptyInView" in capsys.readouterr().err


def test_predict_empty_log(lab_model, tmp_path):
    (tmp_path / "empty.csv").write_bytes(write_csv(EventLog()))
    out = tmp_path / "pred.csv"
    assert run("predict", tmp_path / "empty.csv", "--model", lab_model, "-o", out) == 0
    assert out.read_text() == "case_id,prediction,confidence\n"


def test_predict_numeric_has_empty_confidence(hc_dir, tmp_path):
    model = tmp_path / "rt.json"
    assert run("train", hc_dir / "train.csv", "--task", "remaining-time-process", "-o", model) == 0
    out = tmp_path / "p.csv"
    assert run("predict", hc_dir / "test.csv", "--model", model, "-o", out) == 0
    row = out.read_text().splitlines()[1].split(",")
    assert float(row[1]) >= 0 and row[2] == ""


def test_task_mismatch(hc_dir, lab_model, tmp_path, capsys):
    assert run("predict", hc_dir / "test.csv", "--model", lab_model, "--task", "next-activity",
               "-o", tmp_path / "p.csv") == 1
    assert "ModelTaskMismatch" in capsys.readouterr().err


def test_version_mismatch(hc_dir, lab_model, tmp_path, capsys):
    doc = json.loads(lab_model.read_text())
    doc["schema_version"] = 2
    bad = tmp_path / "old.json"
    bad.write_text(json.dumps(doc))
    assert run("predict", hc_dir / "test.csv", "--model", bad, "-o", tmp_path / "p.csv") == 1
    assert "ModelVersionMismatch" in capsys.readouterr().err


def test_evaluate(hc_dir, lab_model, tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert run("evaluate", hc_dir / "test.csv", "--model", lab_model, "--text", "-o", out) == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert rows[0]["metric"] == "accuracy"
    assert all(r["support"] for r in rows) and int(rows[0]["support"]) > 0
    assert "accuracy" in capsys.readouterr().out


def test_train_from_dataset_matches_direct(hc_dir, tmp_path):
    ds, a, b = tmp_path / "ds.json", tmp_path / "a.json", tmp_path / "b.json"
    flags = ["--task", "remaining-messages", "--participant", "Gynecologist"]
    assert run("dataset", hc_dir / "train.csv", *flags, "--order", 2, "-o", ds) == 0
    assert run("train", "--dataset", ds, "-o", a) == 0
    assert run("train", hc_dir / "train.csv", *flags, "--order", 2, "-o", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_every_command_is_repeatable(hc_dir, lab_model, tmp_path):
    outputs = []
    for i in range(2):
        d = tmp_path / str(i)
        run("view", hc_dir / "train.csv", "--messages-only", "-o", d / "v.xes")
        run("dataset", hc_dir / "train.csv", "--task", "next-participant", "-o", d / "ds.json")
        run("train", hc_dir / "train.csv", "--task", "total-duration", "-o", d / "m.json")
        run("predict", hc_dir / "test.csv", "--model", lab_model, "-o", d / "p.csv")
        run("evaluate", hc_dir / "test.csv", "--model", lab_model, "-o", d / "e.csv")
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outputs[0] == outputs[1]


def test_columns_mapping(tmp_path):
    mapping = {"columns": {"case": "Case", "activity": "Act", "timestamp": "Time", "participant": "Who",
                           "elemType": "Kind", "fromParticipant": "From", "toParticipant": "To"}}
    (tmp_path / "cols.json").write_text(json.dumps(mapping))
    out = tmp_path / "log.csv"
    assert run("simulate", "--model", "buyer_reseller", "--cases", 3, "--columns", tmp_path / "cols.json",
               "-o", out) == 0
    assert out.read_text().startswith("Case,Act,Time,Who,Kind,From,To\n")
    assert run("view", out, "--columns", tmp_path / "cols.json", "--participant", "Buyer", "-o", tmp_path / "b.csv") == 0
