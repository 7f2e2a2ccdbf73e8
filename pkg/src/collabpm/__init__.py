"""Predictive monitoring for inter-organizational collaborative processes."""

from collabpm.errors import CollabError
from collabpm.ingest import ColumnMapping, parse_csv, parse_xes, write_csv, write_xes
from collabpm.merge import merge_logs, normalize, split_log
from collabpm.model import (
    Direction,
    ElemType,
    Event,
    EventLog,
    Prefix,
    Trace,
    validate_event,
    validate_log,
)
from collabpm.predict import (
    Dataset,
    EncoderConfig,
    FrequencyModel,
    Metrics,
    evaluate,
    generate_dataset,
    predict,
    train,
)
from collabpm.simulate import CollabModel, SimConfig, builtin_model, load_model, simulate
from collabpm.tasks import PredictionTask, TaskKind
from collabpm.views import Content, DirectionFilter, ViewSpec, apply_view

__version__ = "0.1.0"

__all__ = [
    "CollabError",
    "CollabModel",
    "ColumnMapping",
    "Content",
    "Dataset",
    "Direction",
    "DirectionFilter",
    "ElemType",
    "EncoderConfig",
    "Event",
    "EventLog",
    "FrequencyModel",
    "Metrics",
    "PredictionTask",
    "Prefix",
    "SimConfig",
    "TaskKind",
    "Trace",
    "ViewSpec",
    "apply_view",
    "builtin_model",
    "evaluate",
    "generate_dataset",
    "load_model",
    "merge_logs",
    "normalize",
    "parse_csv",
    "parse_xes",
    "predict",
    "simulate",
    "split_log",
    "train",
    "validate_event",
    "validate_log",
    "write_csv",
    "write_xes",
]
