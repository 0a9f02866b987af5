"""Segmentation surrogate, superpixels and greedy patch placement."""

from __future__ import annotations

import numpy as np
import pytest

from patchtrack.geometry import Box
from patchtrack.placement import (
    SegmenterConfig,
    dump_debug_pngs,
    pixel_window,
    place_patches,
    segment_object,
    slico_superpixels,
)

from conftest import make_scene


def test_segmenter_config_validation():
    SegmenterConfig().validate()
    with pytest.raises(ValueError):
        SegmenterConfig(shrink=1.4).validate()
    with pytest.raises(ValueError):
        SegmenterConfig(grow=0.9).validate()
    with pytest.raises(ValueError):
        SegmenterConfig(threshold=1.0).validate()
    with pytest.raises(ValueError):
        SegmenterConfig(smoothing=-1).validate()


def test_segment_uniform_object_on_distinct_background(rng):
    # uniform object exactly filling a shrunken box on a uniform background
    frame = np.full((80, 100, 3), (40, 40, 40), dtype=np.uint8)
    frame[20:60, 30:70] = (200, 60, 60)
    box = Box(25, 15, 50, 50)  # object fills the 0.8-shrunk interior
    mask = segment_object(frame, box, SegmenterConfig(), rng)
    x0, y0, x1, y1 = pixel_window(box, frame.shape)
    truth = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    truth[20 - y0 : 60 - y0, 30 - x0 : 70 - x0] = True
    # agreement everywhere except a 1-px band around the object boundary
    interior = truth.copy()
    interior[1:, :] &= truth[:-1, :]
    interior[:-1, :] &= truth[1:, :]
    interior[:, 1:] &= truth[:, :-1]
    interior[:, :-1] &= truth[:, 1:]
    exterior = ~truth.copy()
    exterior[1:, :] &= ~truth[:-1, :]
    exterior[:-1, :] &= ~truth[1:, :]
    exterior[:, 1:] &= ~truth[:, :-1]
    exterior[:, :-1] &= ~truth[:, 1:]
    assert mask[interior].all()
    assert not mask[exterior].any()


def test_segment_indistinct_object_falls_back_all_true(rng):
    frame = np.full((60, 60, 3), (90, 90, 90), dtype=np.uint8)
    box = Box(15, 15, 30, 30)
    mask = segment_object(frame, box, SegmenterConfig(), rng)
    assert mask.all()


def test_segment_degenerate_box_all_true(rng):
    frame = np.zeros((40, 40, 3), dtype=np.uint8)
    mask = segment_object(frame, Box(10, 10, 2, 20), SegmenterConfig(), rng)
    assert mask.all()
    with pytest.raises(ValueError):
        segment_object(frame, Box(100, 100, 10, 10), SegmenterConfig(), rng)


def test_segment_ellipse_scene_matches_truth(rng):
    frame, box, truth = make_scene(seed=3, shape="ellipse")
    mask = segment_object(frame, box, SegmenterConfig(), rng)
    inter = (mask & truth).sum()
    assert inter / mask.sum() > 0.95  # precision
    assert inter / truth.sum() > 0.85  # recall


# --- superpixels ----------------------------------------------------------


def test_slico_uniform_region_balanced_areas(rng):
    image = np.full((40, 40, 3), 128, dtype=np.uint8)
    mask = np.ones((40, 40), dtype=bool)
    labels = slico_superpixels(image, mask, 4, rng)
    sizes = np.bincount(labels[labels >= 0])
    assert len(sizes) == 4
    assert sizes.min() >= 0.75 * 400 and sizes.max() <= 1.25 * 400


def test_slico_single_superpixel(rng):
    image = np.full((20, 30, 3), 99, dtype=np.uint8)
    mask = np.ones((20, 30), dtype=bool)
    labels = slico_superpixels(image, mask, 1, rng)
    assert labels.max() == 0
    assert (labels == 0).sum() == 600


def test_slico_two_colour_boundary(rng):
    image = np.zeros((40, 40, 3), dtype=np.uint8)
    image[:, :20] = (200, 30, 30)
    image[:, 20:] = (30, 30, 200)
    labels = slico_superpixels(image, np.ones((40, 40), bool), 2, rng)
    assert labels.max() + 1 == 2
    for lab in range(2):
        cols = np.nonzero(labels == lab)[1]
        # each label confined to one colour half, within 1 px of the edge
        assert cols.max() - cols.min() <= 20


def test_slico_empty_mask_raises(rng):
    with pytest.raises(ValueError):
        slico_superpixels(np.zeros((10, 10, 3), np.uint8), np.zeros((10, 10), bool), 3, rng)


def test_slico_labels_are_connected_components(rng):
    from skimage.measure import label as cc

    frame, box, _ = make_scene(seed=11)
    x0, y0, x1, y1 = pixel_window(box, frame.shape)
    mask = np.ones((y1 - y0, x1 - x0), dtype=bool)
    labels = slico_superpixels(frame[y0:y1, x0:x1], mask, 20, rng)
    assert (labels[mask] >= 0).all()
    for lab in range(labels.max() + 1):
        comp = cc(labels == lab, connectivity=1)
        assert comp.max() == 1  # exactly one 4-connected component


def test_slico_deterministic(rng):
    frame, box, _ = make_scene(seed=12)
    x0, y0, x1, y1 = pixel_window(box, frame.shape)
    region = frame[y0:y1, x0:x1]
    mask = np.ones(region.shape[:2], dtype=bool)
    a = slico_superpixels(region, mask, 15, np.random.default_rng(1))
    b = slico_superpixels(region, mask, 15, np.random.default_rng(2))
    assert np.array_equal(a, b)


# --- greedy placement -----------------------------------------------------


def _two_label_raster(c1, c2, shape=(30, 30)):
    labels = np.full(shape, -1, dtype=np.int64)
    labels[c1[1], c1[0]] = 0
    labels[c2[1], c2[0]] = 1
    return labels


def test_place_rejects_heavy_overlap():
    # centroids 1 px apart: overlap 20/25 = 0.8 >= 0.25
    labels = np.full((20, 20), -1, dtype=np.int64)
    labels[10, 4:10] = 0  # 6 px, centroid x=6.5 -> 7
    labels[10, 12:17] = 1  # 5 px, centroid x=14
    labels[11, 7] = 0
    got = place_patches(labels, 10, 5, 5, 0.25)
    assert len(got) == 2  # far apart: both kept

    labels2 = _two_label_raster((8, 10), (9, 10))
    got2 = place_patches(labels2, 10, 5, 5, 0.25)
    assert len(got2) == 1


def test_place_accepts_non_overlapping():
    labels = _two_label_raster((5, 10), (10, 10))  # 5 px apart: zero overlap
    got = place_patches(labels, 10, 5, 5, 0.25)
    assert len(got) == 2


def test_place_stops_when_superpixels_run_out(rng):
    # 10 well separated single-pixel superpixels, asking for 35
    labels = np.full((40, 80), -1, dtype=np.int64)
    for i in range(10):
        labels[20, 4 + 7 * i] = i
    got = place_patches(labels, 35, 5, 5, 0.25)
    assert len(got) == 10


def test_place_largest_first_and_centroid_rounding():
    labels = np.full((20, 20), -1, dtype=np.int64)
    labels[2:6, 2:6] = 0  # 16 px, centroid (3.5, 3.5) -> rounds to (4, 4)
    labels[10:13, 10:13] = 1  # 9 px, centroid (11, 11)
    got = place_patches(labels, 5, 3, 3, 0.25)
    assert got[0] == (4.0, 4.0)
    assert got[1] == (11.0, 11.0)


def test_place_overlap_invariant(rng):
    frame, box, _ = make_scene(seed=21)
    x0, y0, x1, y1 = pixel_window(box, frame.shape)
    mask = np.ones((y1 - y0, x1 - x0), dtype=bool)
    labels = slico_superpixels(frame[y0:y1, x0:x1], mask, 35, rng)
    centres = place_patches(labels, 35, 5, 5, 0.25)
    assert len(centres) >= 1
    for i, (ax, ay) in enumerate(centres):
        assert ax == round_trip_int(ax) and ay == round_trip_int(ay)
        for bx, by in centres[:i]:
            inter = max(0.0, 5 - abs(ax - bx)) * max(0.0, 5 - abs(ay - by))
            assert inter / 25.0 < 0.25


def round_trip_int(v):
    return float(int(v))


def test_place_empty_raises():
    with pytest.raises(ValueError):
        place_patches(np.full((5, 5), -1, dtype=np.int64), 3, 5, 5, 0.25)


def test_debug_png_dump(tmp_path, rng):
    frame, box, _ = make_scene(seed=2)
    x0, y0, x1, y1 = pixel_window(box, frame.shape)
    mask = np.ones((y1 - y0, x1 - x0), dtype=bool)
    labels = slico_superpixels(frame[y0:y1, x0:x1], mask, 10, rng)
    dump_debug_pngs(tmp_path, mask, labels)
    assert (tmp_path / "placement_mask.png").is_file()
    assert (tmp_path / "placement_labels.png").is_file()
