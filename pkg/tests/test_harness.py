"""Sequence I/O, protocols with scripted stubs, curves, synthetic data, export."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from PIL import Image

from patchtrack.geometry import Box, iou
from patchtrack.harness import (
    SequenceError,
    SyntheticSpec,
    compute_curves,
    export_run,
    load_sequence,
    make_synthetic,
    parse_ground_truth_line,
    read_per_frame_csv,
    recompute_summary,
    run_many,
    run_one_pass,
    run_supervised,
    summarise,
)
from patchtrack.harness.protocols import centre_error
from patchtrack.tracker import TrackerConfig


# --- stub trackers ----------------------------------------------------------

GT_BOX = Box(10.0, 10.0, 20.0, 20.0)


class StubTracker:
    """Returns a fixed box per step; ignores frames."""

    def __init__(self, box_fn):
        self.box_fn = box_fn
        self.inits = 0
        self.steps = 0

    def init(self, frame, box):
        self.inits += 1
        self.init_box = box

    def step(self, frame):
        self.steps += 1
        return self.box_fn(self), None


def perfect_stub(cfg, seed):
    return StubTracker(lambda s: s.init_box)


def far_stub(cfg, seed):
    return StubTracker(lambda s: Box(500.0, 500.0, 20.0, 20.0))


def fail_once_stub(cfg, seed):
    # fails on the very first step, perfect after the first reinit
    return StubTracker(lambda s: s.init_box if s.inits > 1 else Box(500, 500, 5, 5))


def half_overlap_stub(cfg, seed):
    # top half of the static ground truth: IoU = 200/400 = 0.5 exactly
    return StubTracker(lambda s: Box(10.0, 10.0, 20.0, 10.0))


def make_static_sequence(tmp_path, n=15):
    for i in range(n):
        Image.fromarray(np.full((40, 40, 3), 17, dtype=np.uint8)).save(
            tmp_path / f"{i:06d}.png"
        )
    (tmp_path / "groundtruth.txt").write_text("10,10,20,20\n" * n, encoding="utf-8")
    return load_sequence(tmp_path)


# --- ground truth parsing ---------------------------------------------------


def test_parse_rect_line():
    box, poly = parse_ground_truth_line("10,20,30,40")
    assert box == Box(10, 20, 30, 40) and poly is None


def test_parse_axis_aligned_polygon():
    box, poly = parse_ground_truth_line("5,5,25,5,25,15,5,15")
    assert box == Box(5, 5, 20, 10)
    assert poly.shape == (4, 2)


def test_parse_rotated_square_polygon():
    box, _ = parse_ground_truth_line("0,0,10,10,20,0,10,-10")
    assert box == Box(0, -10, 20, 20)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(SequenceError, match="line 3"):
        parse_ground_truth_line("1,2,3", 3)
    with pytest.raises(SequenceError, match="line 9"):
        parse_ground_truth_line("a,b,c,d", 9)


# --- loading ----------------------------------------------------------------


def test_load_sequence_directory(tmp_path):
    seq = make_static_sequence(tmp_path, n=4)
    assert len(seq) == 4
    assert seq.frame(0).shape == (40, 40, 3)
    assert seq.ground_truth[2] == GT_BOX


def test_load_sequence_manifest(tmp_path):
    make_static_sequence(tmp_path, n=4)
    manifest = tmp_path / "frames.txt"
    manifest.write_text(
        "\n".join(f"{i:06d}.png" for i in range(4)) + "\n", encoding="utf-8"
    )
    seq = load_sequence(manifest, gt_path=tmp_path / "groundtruth.txt")
    assert len(seq) == 4 and seq.name == "frames"


def test_load_sequence_count_mismatch(tmp_path):
    make_static_sequence(tmp_path, n=4)
    (tmp_path / "groundtruth.txt").write_text("10,10,20,20\n" * 3, encoding="utf-8")
    with pytest.raises(SequenceError, match="4 frames but 3"):
        load_sequence(tmp_path)


def test_load_sequence_too_short(tmp_path):
    Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / "0.png")
    (tmp_path / "groundtruth.txt").write_text("1,1,2,2\n")
    with pytest.raises(SequenceError, match="at least 2"):
        load_sequence(tmp_path)


def test_unreadable_frame_reports_index(tmp_path):
    seq = make_static_sequence(tmp_path, n=4)
    seq.frame_paths[2].write_bytes(b"this is not a png")
    with pytest.raises(SequenceError, match="frame 2"):
        seq.frame(2)


# --- supervised protocol ------------------------------------------------------


def test_supervised_perfect_stub(tmp_path):
    seq = make_static_sequence(tmp_path)
    res = run_supervised(seq, TrackerConfig(), 0, tracker_factory=perfect_stub)
    assert res.failures == []
    assert res.ao == 1.0
    assert res.status[0] == "init"
    assert all(s == "tracked" for s in res.status[1:])


def test_supervised_far_stub_timeline(tmp_path):
    seq = make_static_sequence(tmp_path, n=15)
    res = run_supervised(seq, TrackerConfig(), 0, tracker_factory=far_stub)
    # hand simulation: init 0; fail 1; skip 2-5; init 6; fail 7; skip 8-11;
    # init 12; fail 13; skip 14 (next init lands past the end)
    assert res.failures == [1, 7, 13]
    expected = ["init", "failed", "skipped", "skipped", "skipped", "skipped",
                "init", "failed", "skipped", "skipped", "skipped", "skipped",
                "init", "failed", "skipped"]
    assert res.status == expected
    assert res.ao == 0.0


def test_supervised_fail_once_timeline(tmp_path):
    seq = make_static_sequence(tmp_path, n=12)
    res = run_supervised(seq, TrackerConfig(), 0, tracker_factory=fail_once_stub)
    assert res.failures == [1]
    expected = ["init", "failed", "skipped", "skipped", "skipped", "skipped",
                "init"] + ["tracked"] * 5
    assert res.status == expected
    assert res.ao == 1.0


def test_supervised_skip_is_configurable(tmp_path):
    seq = make_static_sequence(tmp_path, n=10)
    cfg = TrackerConfig(reinit_skip=2)
    res = run_supervised(seq, cfg, 0, tracker_factory=far_stub)
    assert res.failures == [1, 4, 7]


# --- one-pass protocol and curves --------------------------------------------


def test_one_pass_perfect_stub(tmp_path):
    seq = make_static_sequence(tmp_path)
    res, curves = run_one_pass(seq, TrackerConfig(), 0, tracker_factory=perfect_stub)
    assert curves.auc == 1.0
    assert curves.precision_at_20 == 1.0
    assert res.ao == 1.0


def test_one_pass_constant_half_iou_closed_form(tmp_path):
    seq = make_static_sequence(tmp_path)
    res, curves = run_one_pass(seq, TrackerConfig(), 0, tracker_factory=half_overlap_stub)
    assert np.all(res.ious[1:] == 0.5)
    thresholds = curves.success_thresholds
    closed_form = (0.5 >= thresholds).astype(float)
    assert np.abs(curves.success - closed_form).max() < 1e-12
    assert curves.auc == pytest.approx(11 / 21, abs=1e-12)
    # centre error: gt centre (20,20), stub centre (20,15) -> 5 px
    closed_precision = (5.0 <= curves.precision_thresholds).astype(float)
    assert np.abs(curves.precision - closed_precision).max() < 1e-12


def test_curve_shapes_and_monotonicity(tmp_path):
    seq = make_static_sequence(tmp_path)
    _, curves = run_one_pass(seq, TrackerConfig(), 0, tracker_factory=half_overlap_stub)
    assert len(curves.success) == 21
    assert len(curves.precision) == 51
    assert (np.diff(curves.success) <= 0).all()
    assert (np.diff(curves.precision) >= 0).all()
    assert curves.auc == pytest.approx(curves.success.mean(), abs=1e-15)


def test_centre_error_345():
    assert centre_error(Box(0, 0, 10, 10), Box(3, 4, 10, 10)) == 5.0


# --- synthetic generation -----------------------------------------------------


def test_synthetic_translation_exact_gt(tmp_path):
    spec = SyntheticSpec(name="t", frames=10, dx=3.0, dy=0.0, start_x=60, start_y=60,
                         width=200, height=140)
    seq = make_synthetic(spec, 0, tmp_path / "t")
    for t in range(1, 10):
        prev, cur = seq.ground_truth[t - 1], seq.ground_truth[t]
        assert cur.x - prev.x == 3.0
        assert cur.y == prev.y
        assert (cur.w, cur.h) == (prev.w, prev.h)


def test_synthetic_rotation_polygon_rigid(tmp_path):
    spec = SyntheticSpec(name="r", frames=8, rotate=math.pi / 200, start_x=100,
                         start_y=70, width=200, height=140)
    seq = make_synthetic(spec, 0, tmp_path / "r")
    assert all(p is not None for p in seq.polygons)
    d0 = [math.dist(seq.polygons[0][i], seq.polygons[0][(i + 1) % 4]) for i in range(4)]
    for t in range(1, 8):
        dt = [math.dist(seq.polygons[t][i], seq.polygons[t][(i + 1) % 4]) for i in range(4)]
        assert dt == pytest.approx(d0, abs=1e-9)
    # and the polygon really rotates
    assert not np.allclose(seq.polygons[0], seq.polygons[7])


def test_synthetic_illumination_ramp(tmp_path):
    spec = SyntheticSpec(name="i", frames=5, illumination=1.0, start_x=60, start_y=60,
                         width=160, height=120)
    seq = make_synthetic(spec, 0, tmp_path / "i")
    f0 = seq.frame(0).astype(int)
    f3 = seq.frame(3).astype(int)
    unsaturated = f0 < 200
    assert np.all((f3 - f0)[unsaturated] == 3)


def test_synthetic_occluder(tmp_path):
    spec = SyntheticSpec(
        name="o", frames=6, start_x=60, start_y=60, width=160, height=120,
        occluder={"axis": "v", "position": 20, "thickness": 8,
                  "colour": [255, 255, 255], "start": 2, "stop": 5},
    )
    seq = make_synthetic(spec, 0, tmp_path / "o")
    assert not (seq.frame(1)[:, 20:28] == 255).all()
    assert (seq.frame(3)[:, 20:28] == 255).all()
    assert not (seq.frame(5)[:, 20:28] == 255).all()


def test_synthetic_descriptor_round_trip(tmp_path):
    spec = SyntheticSpec(name="rt", frames=4, dx=1.5, shape="ellipse",
                         background="blocks", tags=["clutter"])
    again = SyntheticSpec.from_json(spec.to_json())
    assert again == spec
    with pytest.raises(ValueError):
        SyntheticSpec(frames=1).validate()
    with pytest.raises(ValueError):
        SyntheticSpec(shape="triangle").validate()


# --- run_many ----------------------------------------------------------------


def test_run_many_serial_matches_parallel(tmp_path):
    seqs = []
    for k in range(3):
        d = tmp_path / f"s{k}"
        d.mkdir()
        seqs.append(make_static_sequence(d, n=6))
    cfg = TrackerConfig()
    serial = run_many(seqs, cfg, 100, workers=1)
    parallel = run_many(seqs, cfg, 100, workers=3)
    for a, b in zip(serial, parallel):
        assert a.seed == b.seed
        assert np.array_equal(a.ious, b.ious, equal_nan=True)
        assert a.status == b.status


# --- export ------------------------------------------------------------------


def test_export_round_trip_and_counts(tmp_path):
    seq = make_static_sequence(tmp_path)
    res, curves = run_one_pass(seq, TrackerConfig(), 0, tracker_factory=half_overlap_stub)
    out = tmp_path / "out"
    summary = export_run(out, res, curves, seq=seq, annotate=True)
    assert summary["AO"] == 0.5

    rows = read_per_frame_csv(out / "per_frame.csv")
    assert rows["frame"] == list(range(len(seq)))
    tracked = [s == "tracked" for s in rows["status"]]
    assert np.array_equal(rows["iou"][tracked], res.ious[np.array(tracked)])
    # repr round trip is exact, so well within 1e-9
    assert rows["centre_error"][1] == res.centre_errors[1]

    success_rows = (out / "success_curve.csv").read_text().strip().splitlines()
    precision_rows = (out / "precision_curve.csv").read_text().strip().splitlines()
    assert len(success_rows) - 1 == 21
    assert len(precision_rows) - 1 == 51
    assert (out / "annotated" / "000005.png").is_file()

    with open(out / "summary.json", "r", encoding="utf-8") as fh:
        on_disk = json.load(fh)
    assert on_disk == summary


def test_export_perfect_summary(tmp_path):
    seq = make_static_sequence(tmp_path)
    res = run_supervised(seq, TrackerConfig(), 0, tracker_factory=perfect_stub)
    summary = export_run(tmp_path / "out", res)
    assert summary["AO"] == 1.0
    assert summary["failures"] == 0


def test_recompute_summary_matches(tmp_path):
    seq = make_static_sequence(tmp_path)
    res, curves = run_one_pass(seq, TrackerConfig(), 0, tracker_factory=half_overlap_stub)
    out = tmp_path / "out"
    original = export_run(out, res, curves)
    recomputed = recompute_summary(out)
    for key in ("AO", "failures", "AUC", "precision20", "mean_iou", "mode", "frames"):
        assert recomputed[key] == original[key]


def test_summarise_supervised_keys(tmp_path):
    seq = make_static_sequence(tmp_path)
    res = run_supervised(seq, TrackerConfig(), 0, tracker_factory=perfect_stub)
    summary = summarise(res)
    assert {"AO", "failures", "robustness", "fps", "frames", "name", "mode"} <= set(summary)
    assert "AUC" not in summary
