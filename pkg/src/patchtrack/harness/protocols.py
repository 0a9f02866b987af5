"""Evaluation protocols and metrics.

Supervised runs reinitialise from ground truth a fixed number of frames
after each failure (a failure is a frame whose predicted box has zero
overlap with ground truth); one-pass runs never reinitialise and
additionally produce success/precision curves over the predicted frames.

Per-video scores: AO is the mean overlap across successfully tracked
frames (initialisation, skipped and failure frames excluded), robustness
is the failure count. The curve summaries are the area under the success
curve (equal to the mean per-threshold success) and precision at the
20-pixel threshold.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Box, iou
from ..tracker import Tracker, TrackerConfig
from .sequences import Sequence

__all__ = [
    "RunResult",
    "CurveData",
    "run_supervised",
    "run_one_pass",
    "compute_curves",
    "summarise",
    "run_many",
]

SUCCESS_THRESHOLDS = np.arange(21) / 20.0  # IoU 0 .. 1 step 0.05
PRECISION_THRESHOLDS = np.arange(51, dtype=np.float64)  # centre error 0 .. 50 px


@dataclass
class RunResult:
    """Per-frame outcome of one tracking run on one sequence."""

    name: str
    boxes: list[Box | None]
    ious: np.ndarray
    centre_errors: np.ndarray
    qualities: np.ndarray
    status: list[str]  # init | tracked | failed | skipped
    failures: list[int] = field(default_factory=list)
    step_time: float = 0.0
    n_steps: int = 0
    seed: int = 0
    mode: str = "supervised"

    @property
    def n_frames(self) -> int:
        return len(self.status)

    @property
    def tracked(self) -> np.ndarray:
        return np.array([s == "tracked" for s in self.status])

    @property
    def ao(self) -> float:
        tracked = self.tracked
        if not tracked.any():
            return 0.0
        return float(self.ious[tracked].mean())

    @property
    def fps(self) -> float:
        if self.step_time <= 0:
            return 0.0
        return self.n_steps / self.step_time


@dataclass
class CurveData:
    """Measure-threshold curves over the predicted frames of a run."""

    success_thresholds: np.ndarray
    success: np.ndarray
    precision_thresholds: np.ndarray
    precision: np.ndarray

    @property
    def auc(self) -> float:
        return float(self.success.mean())

    @property
    def precision_at_20(self) -> float:
        return float(self.precision[20])


def centre_error(a: Box, b: Box) -> float:
    (ax, ay), (bx, by) = a.centre, b.centre
    return math.hypot(ax - bx, ay - by)


def _default_factory(cfg: TrackerConfig, seed: int) -> Tracker:
    return Tracker(cfg, seed)


def _new_result(seq: Sequence, seed: int, mode: str) -> RunResult:
    n = len(seq)
    return RunResult(
        name=seq.name,
        boxes=[None] * n,
        ious=np.full(n, np.nan),
        centre_errors=np.full(n, np.nan),
        qualities=np.full(n, np.nan),
        status=["skipped"] * n,
        seed=seed,
        mode=mode,
    )


def _record(result: RunResult, i: int, box: Box, gt: Box, qualities) -> float:
    overlap = iou(box, gt)
    result.boxes[i] = box
    result.ious[i] = overlap
    result.centre_errors[i] = centre_error(box, gt)
    if qualities is not None and len(qualities):
        result.qualities[i] = float(np.mean(qualities))
    result.status[i] = "tracked"
    return overlap


def run_supervised(
    seq: Sequence,
    cfg: TrackerConfig,
    seed: int,
    *,
    tracker_factory=None,
) -> RunResult:
    """Supervised protocol: reinitialise ``cfg.reinit_skip`` frames after
    each zero-overlap failure."""
    factory = tracker_factory or _default_factory
    tracker = factory(cfg, seed)
    result = _new_result(seq, seed, "supervised")
    n = len(seq)
    i = 0
    while i < n:
        tracker.init(seq.frame(i), seq.ground_truth[i])
        result.boxes[i] = seq.ground_truth[i]
        result.status[i] = "init"
        j = i + 1
        failed_at = None
        while j < n:
            frame = seq.frame(j)
            t0 = time.perf_counter()
            box, qualities = tracker.step(frame)
            result.step_time += time.perf_counter() - t0
            result.n_steps += 1
            overlap = _record(result, j, box, seq.ground_truth[j], qualities)
            if overlap == 0.0:
                result.status[j] = "failed"
                result.failures.append(j)
                failed_at = j
                break
            j += 1
        if failed_at is None:
            break
        i = failed_at + cfg.reinit_skip
    return result


def run_one_pass(
    seq: Sequence,
    cfg: TrackerConfig,
    seed: int,
    *,
    tracker_factory=None,
) -> tuple[RunResult, CurveData]:
    """One-pass protocol: initialise once, never reinitialise."""
    factory = tracker_factory or _default_factory
    tracker = factory(cfg, seed)
    result = _new_result(seq, seed, "onepass")
    tracker.init(seq.frame(0), seq.ground_truth[0])
    result.boxes[0] = seq.ground_truth[0]
    result.status[0] = "init"
    for j in range(1, len(seq)):
        frame = seq.frame(j)
        t0 = time.perf_counter()
        box, qualities = tracker.step(frame)
        result.step_time += time.perf_counter() - t0
        result.n_steps += 1
        _record(result, j, box, seq.ground_truth[j], qualities)
    curves = compute_curves(result)
    return result, curves


def compute_curves(result: RunResult) -> CurveData:
    """Success/precision curves over the run's predicted frames."""
    tracked = result.tracked | np.array([s == "failed" for s in result.status])
    ious = result.ious[tracked]
    errors = result.centre_errors[tracked]
    if len(ious) == 0:
        success = np.zeros(len(SUCCESS_THRESHOLDS))
        precision = np.zeros(len(PRECISION_THRESHOLDS))
    else:
        success = (ious[None, :] >= SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
        precision = (errors[None, :] <= PRECISION_THRESHOLDS[:, None]).mean(axis=1)
    return CurveData(
        success_thresholds=SUCCESS_THRESHOLDS.copy(),
        success=success,
        precision_thresholds=PRECISION_THRESHOLDS.copy(),
        precision=precision,
    )


def summarise(result: RunResult, curves: CurveData | None = None) -> dict:
    """Scalar summary of one run, JSON-ready."""
    summary = {
        "name": result.name,
        "mode": result.mode,
        "seed": result.seed,
        "frames": result.n_frames,
        "AO": result.ao,
        "failures": len(result.failures),
        "robustness": float(len(result.failures)),
        "fps": result.fps,
    }
    if curves is not None:
        summary["AUC"] = curves.auc
        summary["precision20"] = curves.precision_at_20
        tracked = result.tracked
        summary["mean_iou"] = float(result.ious[tracked].mean()) if tracked.any() else 0.0
    return summary


def _run_job(args):
    seq, cfg, seed, mode = args
    if mode == "supervised":
        return run_supervised(seq, cfg, seed)
    result, _ = run_one_pass(seq, cfg, seed)
    return result


def run_many(
    sequences: list[Sequence],
    cfg: TrackerConfig,
    base_seed: int,
    mode: str = "supervised",
    workers: int = 1,
) -> list[RunResult]:
    """Run a batch of sequences, sequence ``i`` with seed ``base_seed + i``.

    With ``workers > 1`` sequences are distributed across processes (one
    tracker per sequence); results keep the input order, and every run is
    independent of scheduling, so worker count never changes the output.
    """
    jobs = [(seq, cfg, base_seed + i, mode) for i, seq in enumerate(sequences)]
    if workers <= 1:
        return [_run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))
