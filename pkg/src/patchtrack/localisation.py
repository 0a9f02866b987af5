"""Per-frame object localisation.

Two stages: a global stage samples candidate similarity transforms of the
whole patch set and scores each by the mean patch match quality; a local
stage then exhaustively searches a small integer-offset window around
every patch of the best candidates independently, allowing local
deviations from rigid motion.

Patch centres are propagated as continuous coordinates and only rounded
when pixels are extracted, so repeated transforms do not accumulate
rounding drift. Pixels falling outside the frame are simply skipped:
the sub-normalised match histograms then down-weight such blocks
automatically, with a fully out-of-frame block scoring zero.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .colour_model import PatchModel, mbd_from_bc
from .geometry import (
    Box,
    enclosing_aabb,
    expand_box,
    round_half_up,
    sample_transform,
)

__all__ = ["LocaliseResult", "extract_patch_pixels", "localise"]

# Coordinate bound for the position-dedup key; anything beyond it is so
# far outside any real frame that the block is fully invalid either way.
_COORD_BOUND = 1 << 19


class LocaliseResult(NamedTuple):
    centres: np.ndarray  # (P, 2) float64
    qualities: np.ndarray  # (P,) float64
    box: Box
    trace: dict | None


def _block_offsets(patch_w: int, patch_h: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major (x, y) offsets of a block around its centre pixel."""
    dx = np.arange(patch_w, dtype=np.int64) - (patch_w - 1) // 2
    dy = np.arange(patch_h, dtype=np.int64) - (patch_h - 1) // 2
    return np.tile(dx, patch_h), np.repeat(dy, patch_w)


def extract_patch_pixels(frame: np.ndarray, centre, patch_w: int, patch_h: int):
    """In-bounds pixels of the block centred (after rounding) at ``centre``.

    Returns (pixels, valid_count) with pixels in row-major block order;
    a block fully outside the frame yields an empty array.
    """
    h, w = frame.shape[:2]
    cx = int(round_half_up(centre[0]))
    cy = int(round_half_up(centre[1]))
    offs_x, offs_y = _block_offsets(patch_w, patch_h)
    ix = cx + offs_x
    iy = cy + offs_y
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    pixels = frame[iy[valid], ix[valid]].astype(np.float64)
    return pixels, int(valid.sum())


def _block_histograms(
    frame64: np.ndarray,
    positions: np.ndarray,
    centres: np.ndarray,
    r2: float,
    patch_w: int,
    patch_h: int,
) -> np.ndarray:
    """Match histograms (U, S) of blocks at integer (x, y) positions.

    Arithmetic mirrors colour_model.match_counts exactly: squared RGB
    distances, strict radius test, first-minimum centre assignment,
    histogram normalised by the nominal block pixel count.
    """
    h, w = frame64.shape[:2]
    u = len(positions)
    s = len(centres)
    offs_x, offs_y = _block_offsets(patch_w, patch_h)
    ix = positions[:, 0:1] + offs_x[None, :]
    iy = positions[:, 1:2] + offs_y[None, :]
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    flat = np.where(valid, iy * w + ix, 0)
    px = frame64.reshape(-1, 3)[flat]  # (U, n, 3)

    diff = px[:, :, None, :] - centres[None, None, :, :]
    d2 = (diff * diff).sum(axis=-1)  # (U, n, S)
    nearest = d2.argmin(axis=-1)
    matched = (d2.min(axis=-1) < r2) & valid

    rows = np.broadcast_to(np.arange(u)[:, None], nearest.shape)
    hits = (rows * s + nearest)[matched]
    hist = np.bincount(hits, minlength=u * s).astype(np.float64).reshape(u, s)
    return hist / (patch_w * patch_h)


def _qualities_from_histograms(
    hist: np.ndarray, h_norm: np.ndarray, exponent: float
) -> np.ndarray:
    bc = np.sqrt(h_norm[None, :] * hist).sum(axis=-1)
    return 1.0 - mbd_from_bc(bc, exponent)


def _eval_positions(
    frame64: np.ndarray, positions: np.ndarray, model: PatchModel, exponent: float
) -> np.ndarray:
    """Patch quality at each integer (x, y) position, deduplicating
    repeated positions (candidate transforms bunch up heavily)."""
    pos = np.clip(positions, -_COORD_BOUND, _COORD_BOUND)
    key = (pos[:, 1] + _COORD_BOUND) * (2 * _COORD_BOUND + 1) + pos[:, 0]
    _, uidx, inverse = np.unique(key, return_index=True, return_inverse=True)
    hist = _block_histograms(
        frame64,
        pos[uidx],
        model.centres,
        model.match_radius**2,
        model.patch_w,
        model.patch_h,
    )
    q = _qualities_from_histograms(hist, model.normalised_counts, exponent)
    return q[inverse]


def _apply_transform_batch(transforms, anchor, points: np.ndarray) -> np.ndarray:
    """apply_transform for every transform at once; (G, P, 2) output,
    bit-identical to looping apply_transform."""
    ax, ay = float(anchor[0]), float(anchor[1])
    dx = points[None, :, 0] - ax
    dy = points[None, :, 1] - ay
    rot = np.array([t.rotation for t in transforms])[:, None]
    sc = np.array([t.scale for t in transforms])[:, None]
    tx = np.array([t.tx for t in transforms])[:, None]
    ty = np.array([t.ty for t in transforms])[:, None]
    c = np.cos(rot)
    s = np.sin(rot)
    out = np.empty((len(transforms), len(points), 2))
    out[..., 0] = sc * (c * dx - s * dy) + ax + tx
    out[..., 1] = sc * (s * dx + c * dy) + ay + ty
    return out


def localise(frame: np.ndarray, state, cfg, *, collect_trace: bool = False) -> LocaliseResult:
    """Find the patch set in ``frame`` and report the expanded bounding box.

    ``state`` supplies the patches, the previous predicted box (which sets
    the translation prior scales) and the per-stage random streams. The
    local stage is skipped when the refinement count is zero.
    """
    patches: list[PatchModel] = state.patches
    n_patches = len(patches)
    if n_patches == 0:
        raise ValueError("tracker state holds no patches")
    n_transforms = cfg.num_transforms
    if n_transforms < 1:
        raise ValueError("at least one candidate transform is required")
    n_refined = 0 if cfg.no_local_opt else min(cfg.num_refined, n_transforms)
    exponent = cfg.effective_mbd_exponent

    frame64 = np.asarray(frame, dtype=np.float64)
    prev = np.array([p.location for p in patches], dtype=np.float64)
    anchor = prev.mean(axis=0)

    rng_t = state.rngs.transforms
    rng_ties = state.rngs.ties
    transforms = [
        sample_transform(cfg.priors, state.prev_box, rng_t) for _ in range(n_transforms)
    ]
    mapped = _apply_transform_batch(transforms, anchor, prev)  # (G, P, 2)
    pos_int = round_half_up(mapped).astype(np.int64)

    global_q = np.empty((n_transforms, n_patches))
    for p in range(n_patches):
        global_q[:, p] = _eval_positions(frame64, pos_int[:, p, :], patches[p], exponent)
    cand_q = global_q.mean(axis=1)

    # best-first order; equal qualities at the cut admitted in rng order
    order = np.lexsort((rng_ties.random(n_transforms), -cand_q))

    if n_refined == 0:
        win = int(order[0])
        centres = mapped[win].copy()
        qualities = global_q[win].copy()
        trace = None
        if collect_trace:
            trace = {
                "transforms": transforms,
                "global_qualities": cand_q,
                "kept": order[:0],
                "winner": win,
            }
        box = expand_box(enclosing_aabb(centres, cfg.patch_w, cfg.patch_h), cfg.box_expand)
        return LocaliseResult(centres, qualities, box, trace)

    kept = order[:n_refined]
    k = len(kept)
    half = (cfg.window - 1) // 2
    span = np.arange(-half, half + 1, dtype=np.int64)
    offs = np.stack(
        [np.tile(span, cfg.window), np.repeat(span, cfg.window)], axis=1
    )  # (W^2, 2) as (dx, dy)
    off_d2 = (offs * offs).sum(axis=1).astype(np.float64)
    n_offs = len(offs)

    ref_centres = np.empty((k, n_patches, 2))
    ref_q = np.empty((k, n_patches))
    for p in range(n_patches):
        base = pos_int[kept, p, :]
        positions = (base[:, None, :] + offs[None, :, :]).reshape(-1, 2)
        q = _eval_positions(frame64, positions, patches[p], exponent).reshape(k, n_offs)
        # best quality; ties to the offset nearest the window centre;
        # equidistant ties broken by the rng
        rand = rng_ties.random((k, n_offs))
        top = q.max(axis=1, keepdims=True)
        at_top = q == top
        d2_masked = np.where(at_top, off_d2[None, :], np.inf)
        d2_best = d2_masked.min(axis=1, keepdims=True)
        in_tie = at_top & (d2_masked == d2_best)
        choice = np.where(in_tie, rand, -1.0).argmax(axis=1)
        rows = np.arange(k)
        ref_q[:, p] = q[rows, choice]
        ref_centres[:, p, :] = mapped[kept, p, :] + offs[choice]

    ref_obj_q = ref_q.mean(axis=1)
    best = int(ref_obj_q.argmax())
    centres = ref_centres[best]
    qualities = ref_q[best]
    trace = None
    if collect_trace:
        trace = {
            "transforms": transforms,
            "global_qualities": cand_q,
            "kept": kept,
            "refined_qualities": ref_obj_q,
            "winner": int(kept[best]),
        }
    box = expand_box(enclosing_aabb(centres, cfg.patch_w, cfg.patch_h), cfg.box_expand)
    return LocaliseResult(centres, qualities, box, trace)
