"""Command-line entry point: ``collabpm <command> ...``.

Exit codes: 0 on success, 1 on a domain error (the error class name is
printed on stderr), 2 on a usage error.  Set ``COLLABPM_LOG=DEBUG`` (or INFO,
WARNING, ...) for more output on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from collabpm import errors
from collabpm.ingest import ColumnMapping, dump_log, guess_format, parse_timestamp, read_log
from collabpm.merge import merge_logs, split_log
from collabpm.predict import (
    Dataset,
    EncoderConfig,
    FrequencyModel,
    evaluate,
    generate_dataset,
    predict,
    train,
)
from collabpm.simulate import SimConfig, resolve_model, simulate
from collabpm.tasks import MESSAGE_TARGET_KINDS, PredictionTask, parse_task_name
from collabpm.views import Content, DirectionFilter, ViewSpec, apply_view

log = logging.getLogger("collabpm")

PREDICTION_COLUMNS = ("case_id", "prediction", "confidence")


class UsageError(Exception):
    pass


def write_atomic(path: str, data: bytes) -> None:
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


# -- argument helpers ---------------------------------------------------------------


def _mapping(args) -> ColumnMapping | None:
    if not getattr(args, "columns", None):
        return None
    return ColumnMapping.from_dict(json.loads(Path(args.columns).read_text(encoding="utf-8")))


def _read(path: str, args):
    return read_log(path, getattr(args, "input_format", None), _mapping(args))


def _out_format(args, out: str) -> str:
    return args.format or (guess_format(out) if out != "-" else "csv")


def _view(args, scope: str | None = None) -> ViewSpec:
    scope = scope or args.scope
    if args.scope and scope != args.scope:
        raise UsageError(f"task name implies scope {scope!r} but --scope is {args.scope!r}")
    if scope == "process" and args.participant:
        raise UsageError("--participant conflicts with process scope")
    if scope == "participant" and not args.participant:
        raise UsageError("participant scope needs --participant")
    return ViewSpec(
        participant=args.participant,
        content=Content.MESSAGES if args.messages_only else Content.ALL,
        direction=DirectionFilter(args.direction or "any"),
    )


def _task(args) -> PredictionTask:
    kind, direction, scope = parse_task_name(args.task)
    if direction is not None:
        if args.direction and args.direction != direction.value:
            raise UsageError(f"task {args.task!r} implies --direction {direction.value}")
        args.direction = direction.value
    view = _view(args, scope)
    if kind in MESSAGE_TARGET_KINDS and view.direction is DirectionFilter.ANY and view.content is Content.ALL:
        log.info("%s targets message events; using a messages-only view", kind.value)
        view = ViewSpec(view.participant, Content.MESSAGES, view.direction)
    return PredictionTask(kind, view, args.target)


def _encoder(args) -> EncoderConfig:
    return EncoderConfig(
        order=args.order,
        last_participant=args.last_participant,
        last_direction=args.last_direction,
    )


def _add_view_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("view")
    g.add_argument("--scope", choices=("process", "participant"), help="prediction scope")
    g.add_argument("--participant", help="participant for participant scope")
    g.add_argument("--direction", choices=("any", "send", "receive"), help="message direction filter")
    g.add_argument("--messages-only", action="store_true", help="drop user (non-message) events")


def _add_task_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--task", required=required, help="task id, e.g. next-message-send, remaining-time-process")
    p.add_argument("--target", help="participant or message the outcome tasks ask about")
    _add_view_flags(p)


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--order", type=int, default=3, help="context length n (default 3)")
    p.add_argument("--last-participant", action="store_true", help="append the last event's participant")
    p.add_argument("--last-direction", action="store_true", help="append the last event's direction")


def _add_io(p: argparse.ArgumentParser, out: bool = True) -> None:
    p.add_argument("--columns", help="JSON column mapping for CSV logs")
    p.add_argument("--input-format", choices=("xes", "csv"), help="override input format detection")
    if out:
        p.add_argument("-o", "--out", required=True, help="output file ('-' for stdout)")


# -- commands -----------------------------------------------------------------------


def cmd_simulate(args) -> None:
    model = resolve_model(args.model)
    start = parse_timestamp(args.start) if args.start else SimConfig.start
    cfg = SimConfig(n_cases=args.cases, seed=args.seed, start=start)
    result = simulate(model, cfg)
    fmt = _out_format(args, args.out)
    mapping = _mapping(args)
    write_atomic(args.out, dump_log(result, fmt, mapping))
    if args.split_dir:
        for participant, part in split_log(result).items():
            write_atomic(str(Path(args.split_dir) / f"{participant}.{fmt}"), dump_log(part, fmt, mapping))
    log.info("simulated %d cases, %d events", len(result), result.n_events)


def cmd_merge(args) -> None:
    parts = [_read(p, args) for p in args.inputs]
    write_atomic(args.out, dump_log(merge_logs(parts), _out_format(args, args.out), _mapping(args)))


def cmd_split(args) -> None:
    collab = _read(args.input, args)
    fmt = args.format or guess_format(args.input)
    for participant, part in split_log(collab).items():
        write_atomic(str(Path(args.out_dir) / f"{participant}.{fmt}"), dump_log(part, fmt, _mapping(args)))


def cmd_view(args) -> None:
    source = _read(args.input, args)
    viewed = apply_view(source, _view(args))
    dropped = len(source) - len(viewed)
    if dropped:
        print(f"dropped {dropped} trace(s) with no events in view", file=sys.stderr)
    write_atomic(args.out, dump_log(viewed, _out_format(args, args.out), _mapping(args)))


def cmd_dataset(args) -> None:
    data = generate_dataset(_read(args.input, args), _task(args), _encoder(args), args.drop_witnessed)
    write_atomic(args.out, data.dumps())
    print(
        f"{len(data)} rows; excluded undefined={data.excluded_undefined} "
        f"witnessed={data.excluded_witnessed}; dropped traces={data.dropped_traces}",
        file=sys.stderr,
    )


def cmd_train(args) -> None:
    if args.dataset:
        if args.input or args.task:
            raise UsageError("give either --dataset or a log with --task, not both")
        data = Dataset.loads(Path(args.dataset).read_bytes())
        order = args.order if args.order is not None else data.encoder.order
    else:
        if not (args.input and args.task):
            raise UsageError("train needs --dataset, or a log file and --task")
        if args.order is None:
            args.order = 3
        data = generate_dataset(_read(args.input, args), _task(args), _encoder(args), args.drop_witnessed)
        order = args.order
    model = train(data, order=order, min_count=args.min_count)
    write_atomic(args.out, model.dumps())


def _load_model(args) -> FrequencyModel:
    model = FrequencyModel.loads(Path(args.model).read_bytes())
    if args.task:
        wanted = _task(args)
        if wanted != model.task:
            raise errors.ModelTaskMismatch(
                f"model was trained for {model.task.to_dict()}, not {wanted.to_dict()}"
            )
    return model


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def cmd_predict(args) -> None:
    model = _load_model(args)
    running = _read(args.input, args)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_COLUMNS)
    empty = 0
    for trace in running.traces:
        try:
            p = predict(model, trace)
        except errors.PrefixEmptyInView:
            empty += 1
            w.writerow([trace.case_id, "", ""])
            continue
        confidence = "" if p.confidence is None else f"{p.confidence:.6f}"
        w.writerow([trace.case_id, _fmt_value(p.value), confidence])
    if empty:
        print(f"PrefixEmptyInView: {empty} case(s) have no events in the model's view yet", file=sys.stderr)
    write_atomic(args.out, buf.getvalue().encode("utf-8"))


def cmd_evaluate(args) -> None:
    model = _load_model(args)
    metrics = evaluate(model, _read(args.input, args))
    write_atomic(args.out, metrics.to_csv())
    if args.text:
        sys.stdout.write(metrics.to_text())


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collabpm",
        description="Predictive monitoring for collaborative (multi-participant) process logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a collaboration log from a model")
    p.add_argument("--model", required=True, help="builtin name (buyer_reseller, healthcare) or YAML model file")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", help="ISO-8601 start time of the first case")
    p.add_argument("--format", choices=("xes", "csv"))
    p.add_argument("--split-dir", help="also write one log per participant here")
    _add_io(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("merge", help="merge participant logs into a collaboration log")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=("xes", "csv"))
    _add_io(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("split", help="split a collaboration log into participant logs")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("xes", "csv"))
    _add_io(p, out=False)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("view", help="filter a log by participant, messages, direction")
    p.add_argument("input")
    p.add_argument("--format", choices=("xes", "csv"))
    _add_view_flags(p)
    _add_io(p)
    p.set_defaults(func=cmd_view)

    p = sub.add_parser("dataset", help="turn a log into (encoded prefix, target) rows")
    p.add_argument("input")
    _add_task_flags(p)
    _add_encoder_flags(p)
    p.add_argument("--drop-witnessed", action="store_true", help="drop outcome rows already decided by the prefix")
    _add_io(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train a frequency model")
    p.add_argument("input", nargs="?", help="complete-trace log (with --task)")
    p.add_argument("--dataset", help="dataset file from 'collabpm dataset'")
    _add_task_flags(p, required=False)
    p.add_argument("--order", type=int, default=None, help="context length n (default 3)")
    p.add_argument("--last-participant", action="store_true")
    p.add_argument("--last-direction", action="store_true")
    p.add_argument("--min-count", type=int, default=1, help="observations needed before backing off (default 1)")
    p.add_argument("--drop-witnessed", action="store_true")
    _add_io(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict one target per running case")
    p.add_argument("input", help="log of incomplete traces")
    p.add_argument("--model", required=True, help="model file from 'collabpm train'")
    _add_task_flags(p, required=False)
    _add_io(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a model on a held-out log of complete traces")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--text", action="store_true", help="also print a readable report")
    _add_task_flags(p, required=False)
    _add_io(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("COLLABPM_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except errors.CollabError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
