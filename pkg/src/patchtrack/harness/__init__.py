"""Evaluation harness: sequence I/O, protocols, synthetic data, export."""

from .sequences import Sequence, SequenceError, load_sequence, parse_ground_truth_line
from .synthetic import SyntheticSpec, make_synthetic
from .protocols import (
    CurveData,
    RunResult,
    compute_curves,
    run_many,
    run_one_pass,
    run_supervised,
    summarise,
)
from .export import export_run, read_per_frame_csv, recompute_summary

__all__ = [
    "CurveData",
    "RunResult",
    "Sequence",
    "SequenceError",
    "SyntheticSpec",
    "compute_curves",
    "export_run",
    "load_sequence",
    "make_synthetic",
    "parse_ground_truth_line",
    "read_per_frame_csv",
    "recompute_summary",
    "run_many",
    "run_one_pass",
    "run_supervised",
    "summarise",
]
