"""Result export: per-frame CSV, summary JSON, curve CSVs, annotated frames.

Floats are written with ``repr`` so parsing the CSV back recovers the
exact values; absent values (skipped frames) are written as ``nan``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from ..geometry import Box
from .protocols import (
    PRECISION_THRESHOLDS,
    SUCCESS_THRESHOLDS,
    CurveData,
    RunResult,
    summarise,
)
from .sequences import Sequence

__all__ = [
    "export_run",
    "read_per_frame_csv",
    "recompute_summary",
    "write_annotated_frames",
]

PER_FRAME_FIELDS = ["frame", "x", "y", "w", "h", "iou", "centre_error", "quality", "status"]


def _fmt(v: float | None) -> str:
    if v is None:
        return "nan"
    return repr(float(v))


def write_per_frame_csv(path, result: RunResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PER_FRAME_FIELDS)
        for i in range(result.n_frames):
            box = result.boxes[i]
            x, y, w, h = box.as_tuple() if box is not None else (None,) * 4
            writer.writerow(
                [
                    i,
                    _fmt(x),
                    _fmt(y),
                    _fmt(w),
                    _fmt(h),
                    _fmt(result.ious[i]),
                    _fmt(result.centre_errors[i]),
                    _fmt(result.qualities[i]),
                    result.status[i],
                ]
            )


def read_per_frame_csv(path) -> dict:
    """Parse a per-frame CSV back into aligned arrays/lists."""
    rows: dict = {k: [] for k in PER_FRAME_FIELDS}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PER_FRAME_FIELDS:
            raise ValueError(f"unexpected per-frame CSV header in {path}")
        for record in reader:
            rows["frame"].append(int(record["frame"]))
            for key in ("x", "y", "w", "h", "iou", "centre_error", "quality"):
                rows[key].append(float(record[key]))
            rows["status"].append(record["status"])
    for key in ("x", "y", "w", "h", "iou", "centre_error", "quality"):
        rows[key] = np.array(rows[key], dtype=np.float64)
    return rows


def _write_curve_csv(path, thresholds: np.ndarray, values: np.ndarray, names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for t, v in zip(thresholds, values):
            writer.writerow([_fmt(t), _fmt(v)])


def write_annotated_frames(out_dir, seq: Sequence, result: RunResult) -> None:
    """Save frames with the predicted (red) and ground-truth (green) boxes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(min(len(seq), result.n_frames)):
        frame = seq.frame(i).copy()
        _draw_box(frame, seq.ground_truth[i], (0, 255, 0))
        if result.boxes[i] is not None:
            _draw_box(frame, result.boxes[i], (255, 0, 0))
        Image.fromarray(frame).save(out / f"{i:06d}.png")


def _draw_box(frame: np.ndarray, box: Box, colour) -> None:
    h, w = frame.shape[:2]
    x0 = int(np.clip(round(box.x), 0, w - 1))
    y0 = int(np.clip(round(box.y), 0, h - 1))
    x1 = int(np.clip(round(box.x + box.w), 0, w - 1))
    y1 = int(np.clip(round(box.y + box.h), 0, h - 1))
    frame[y0 : y1 + 1, x0] = colour
    frame[y0 : y1 + 1, x1] = colour
    frame[y0, x0 : x1 + 1] = colour
    frame[y1, x0 : x1 + 1] = colour


def export_run(
    out_dir,
    result: RunResult,
    curves: CurveData | None = None,
    seq: Sequence | None = None,
    annotate: bool = False,
) -> dict:
    """Write all artefacts for one run; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_per_frame_csv(out / "per_frame.csv", result)
    summary = summarise(result, curves)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if curves is not None:
        _write_curve_csv(
            out / "success_curve.csv",
            curves.success_thresholds,
            curves.success,
            ["iou_threshold", "success"],
        )
        _write_curve_csv(
            out / "precision_curve.csv",
            curves.precision_thresholds,
            curves.precision,
            ["error_threshold", "precision"],
        )
    if annotate:
        if seq is None:
            raise ValueError("annotation requires the sequence")
        write_annotated_frames(out / "annotated", seq, result)
    return summary


def recompute_summary(results_dir) -> dict:
    """Rebuild summary.json (and curves, for one-pass runs) from the
    per-frame CSV in ``results_dir``."""
    out = Path(results_dir)
    rows = read_per_frame_csv(out / "per_frame.csv")
    status = rows["status"]
    tracked = np.array([s == "tracked" for s in status])
    predicted = tracked | np.array([s == "failed" for s in status])
    failures = sum(s == "failed" for s in status)

    prior: dict = {}
    summary_path = out / "summary.json"
    if summary_path.is_file():
        with open(summary_path, "r", encoding="utf-8") as fh:
            prior = json.load(fh)
    mode = prior.get("mode", "supervised" if failures or "skipped" in status else "onepass")

    summary = {
        "name": prior.get("name", out.name),
        "mode": mode,
        "seed": prior.get("seed", 0),
        "frames": len(status),
        "AO": float(rows["iou"][tracked].mean()) if tracked.any() else 0.0,
        "failures": int(failures),
        "robustness": float(failures),
        "fps": prior.get("fps", 0.0),
    }
    if mode == "onepass":
        ious = rows["iou"][predicted]
        errors = rows["centre_error"][predicted]
        success = (ious[None, :] >= SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
        precision = (errors[None, :] <= PRECISION_THRESHOLDS[:, None]).mean(axis=1)
        summary["AUC"] = float(success.mean())
        summary["precision20"] = float(precision[20])
        summary["mean_iou"] = float(ious.mean()) if len(ious) else 0.0
        _write_curve_csv(
            out / "success_curve.csv", SUCCESS_THRESHOLDS, success,
            ["iou_threshold", "success"],
        )
        _write_curve_csv(
            out / "precision_curve.csv", PRECISION_THRESHOLDS, precision,
            ["error_threshold", "precision"],
        )
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
