"""First-frame patch placement.

Three stages decide where patches go:

1. ``segment_object`` labels the pixels inside the given bounding box that
   are likely to belong to the object. The default implementation is a
   self-contained surrogate for an external matting-style initialiser: it
   builds colour-sample priors from a shrunken copy of the box (object)
   and from the ring around it (background) and classifies box pixels by
   their relative closeness to the two priors. The tracker treats the
   segmenter as a pluggable callable, so a stronger method can be dropped
   in without touching anything else.
2. ``slico_superpixels`` over-segments the masked region into
   approximately ``target_k`` compact, colour-homogeneous superpixels
   using the adaptive-compactness (zero-parameter) SLIC variant, restricted
   to masked pixels, with a connectivity post-pass.
3. ``place_patches`` takes superpixel centroids greedily, largest
   superpixel first, rejecting centroids whose patch rectangle would
   overlap an already placed patch by too large an area fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage.color import rgb2lab
from skimage.measure import label as connected_components

from .colour_model import sample_centre_counts
from .geometry import Box, round_half_up

__all__ = [
    "SegmenterConfig",
    "pixel_window",
    "segment_object",
    "slico_superpixels",
    "place_patches",
    "dump_debug_pngs",
]

# Pixels sampled into each segmentation prior; keeps the sampling pass
# cheap on large boxes without visibly changing the priors.
_MAX_PRIOR_SAMPLES = 1024

# Mask fraction below which the segmenter is considered to have failed
# and the whole box is used instead.
_MIN_OBJECT_FRACTION = 0.05

_SLIC_ITERATIONS = 10
_SLIC_INITIAL_COMPACTNESS = 100.0  # squared lab distance, conventional 10^2


@dataclass(frozen=True)
class SegmenterConfig:
    """Parameters of the object/background prior construction.

    ``shrink`` scales the box down for the object prior, ``grow`` scales
    it up to bound the background ring, ``threshold`` is the minimum
    smoothed object-vs-background score, and ``smoothing`` weights the
    score-field smoothing (smaller values mean more passes of the 3x3
    mean filter; the pass count is ceil(1 / (100 * smoothing))).
    """

    shrink: float = 0.8
    grow: float = 1.2
    threshold: float = 0.85
    smoothing: float = 1e-2

    def validate(self) -> None:
        if not 0.0 < self.shrink <= 1.0 <= self.grow:
            raise ValueError("requires 0 < shrink <= 1 <= grow")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.smoothing < 0.0:
            raise ValueError("smoothing must be nonnegative")


def pixel_window(box: Box, shape) -> tuple[int, int, int, int]:
    """Integer (x0, y0, x1, y1) region of ``box`` clipped to an image shape."""
    h, w = shape[0], shape[1]
    x0 = max(0, int(math.floor(box.x)))
    y0 = max(0, int(math.floor(box.y)))
    x1 = min(w, int(math.ceil(box.x + box.w)))
    y1 = min(h, int(math.ceil(box.y + box.h)))
    return x0, y0, max(x1, x0), max(y1, y0)


def _scaled_box(box: Box, factor: float) -> Box:
    cx, cy = box.centre
    w, h = box.w * factor, box.h * factor
    return Box(cx - w / 2.0, cy - h / 2.0, w, h)


def _region_pixels(image: np.ndarray, window) -> np.ndarray:
    x0, y0, x1, y1 = window
    return image[y0:y1, x0:x1].reshape(-1, 3).astype(np.float64)


def _closeness(pixels: np.ndarray, centres: np.ndarray, radius: float) -> np.ndarray:
    """1 at a centre, linearly falling to 0 at the matching radius."""
    if len(centres) == 0:
        return np.zeros(len(pixels))
    d2 = np.full(len(pixels), np.inf)
    for c in centres:
        d2 = np.minimum(d2, ((pixels - c) ** 2).sum(axis=1))
    return np.maximum(0.0, 1.0 - np.sqrt(d2) / radius)


def _mean_filter_3x3(field: np.ndarray, passes: int) -> np.ndarray:
    out = field
    for _ in range(passes):
        p = np.pad(out, 1, mode="edge")
        acc = np.zeros_like(out)
        for dy in range(3):
            for dx in range(3):
                acc += p[dy : dy + out.shape[0], dx : dx + out.shape[1]]
        out = acc / 9.0
    return out


def _subsample(pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if len(pixels) <= _MAX_PRIOR_SAMPLES:
        return pixels
    pick = rng.choice(len(pixels), size=_MAX_PRIOR_SAMPLES, replace=False)
    return pixels[pick]


def segment_object(
    image: np.ndarray,
    box: Box,
    cfg: SegmenterConfig,
    rng: np.random.Generator,
    match_radius: float = 20.0,
) -> np.ndarray:
    """Boolean object mask aligned to the box's pixel window.

    Falls back to an all-true mask when the box is degenerate (side below
    3 px) or when fewer than 5% of pixels classify as object, which covers
    objects indistinguishable from their background.
    """
    x0, y0, x1, y1 = pixel_window(box, image.shape)
    rh, rw = y1 - y0, x1 - x0
    if rh == 0 or rw == 0:
        raise ValueError("bounding box does not intersect the image")
    if box.w < 3 or box.h < 3:
        return np.ones((rh, rw), dtype=bool)

    inner = _region_pixels(image, pixel_window(_scaled_box(box, cfg.shrink), image.shape))
    ox0, oy0, ox1, oy1 = pixel_window(_scaled_box(box, cfg.grow), image.shape)
    ring_mask = np.ones((oy1 - oy0, ox1 - ox0), dtype=bool)
    ring_mask[y0 - oy0 : y1 - oy0, x0 - ox0 : x1 - ox0] = False
    ring = image[oy0:oy1, ox0:ox1].reshape(-1, 3).astype(np.float64)[ring_mask.ravel()]

    if len(inner) == 0:
        return np.ones((rh, rw), dtype=bool)
    obj_centres, _ = sample_centre_counts(_subsample(inner, rng), match_radius, rng)
    if len(ring) > 0:
        bg_centres, _ = sample_centre_counts(_subsample(ring, rng), match_radius, rng)
    else:
        bg_centres = np.empty((0, 3))

    region = _region_pixels(image, (x0, y0, x1, y1))
    m_obj = _closeness(region, obj_centres, match_radius)
    m_bg = _closeness(region, bg_centres, match_radius)
    total = m_obj + m_bg
    score = np.divide(m_obj, total, out=np.zeros_like(m_obj), where=total > 0)
    score = score.reshape(rh, rw)

    passes = 0 if cfg.smoothing <= 0 else math.ceil(1.0 / (100.0 * cfg.smoothing))
    score = _mean_filter_3x3(score, passes)

    matchable = (m_obj > 0).reshape(rh, rw)
    mask = matchable & (score > cfg.threshold)
    if mask.mean() < _MIN_OBJECT_FRACTION:
        return np.ones((rh, rw), dtype=bool)
    return mask


def _seed_grid(mask: np.ndarray, target_k: int) -> tuple[np.ndarray, float]:
    """Regular grid of seed coordinates (row, col) over the mask's extent."""
    rows, cols = np.nonzero(mask)
    r0, r1 = rows.min(), rows.max() + 1
    c0, c1 = cols.min(), cols.max() + 1
    bh, bw = r1 - r0, c1 - c0
    step = math.sqrt(mask.sum() / target_k)
    ny = max(1, round(bh / step))
    nx = max(1, round(bw / step))
    while nx * ny < target_k:
        if bw / nx >= bh / ny:
            nx += 1
        else:
            ny += 1
    sy = r0 + (np.arange(ny) + 0.5) * bh / ny
    sx = c0 + (np.arange(nx) + 0.5) * bw / nx
    grid = np.stack(np.meshgrid(sy, sx, indexing="ij"), axis=-1).reshape(-1, 2)
    return round_half_up(grid).astype(np.int64), step


def _snap_and_perturb(
    seeds: np.ndarray, mask: np.ndarray, grad2: np.ndarray
) -> np.ndarray:
    """Move seeds onto masked pixels, then to the lowest-gradient masked
    pixel in their 3x3 neighbourhood; duplicates collapse to one seed."""
    h, w = mask.shape
    masked = np.argwhere(mask)
    out = []
    seen = set()
    for sy, sx in seeds:
        if not (0 <= sy < h and 0 <= sx < w) or not mask[sy, sx]:
            d = ((masked[:, 0] - sy) ** 2) + ((masked[:, 1] - sx) ** 2)
            sy, sx = masked[int(d.argmin())]
        best = (grad2[sy, sx], sy, sx)
        for ny in range(max(0, sy - 1), min(h, sy + 2)):
            for nx in range(max(0, sx - 1), min(w, sx + 2)):
                if mask[ny, nx] and grad2[ny, nx] < best[0]:
                    best = (grad2[ny, nx], ny, nx)
        key = (int(best[1]), int(best[2]))
        if key not in seen:
            seen.add(key)
            out.append(key)
    return np.array(out, dtype=np.int64)


def slico_superpixels(
    image: np.ndarray,
    mask: np.ndarray,
    target_k: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Segment the masked region into about ``target_k`` superpixels.

    Runs localised k-means in joint (L, a, b, row, col) space over masked
    pixels only. Each cluster gets its own compactness weight: the maximum
    colour distance observed in that cluster during the previous iteration
    (this is what makes the variant parameter-free). A final pass splits
    the label raster into connected components and merges each orphan
    fragment into its largest adjacent component, so labels and
    4-connected components end up in bijection.

    ``rng`` is part of the interface for parity with the other placement
    stages but the algorithm itself is fully deterministic.
    """
    del rng  # deterministic; see docstring
    if target_k < 1:
        raise ValueError("target_k must be at least 1")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("cannot superpixel an empty mask")
    lab = rgb2lab(np.asarray(image, dtype=np.uint8))

    gx = np.gradient(lab, axis=1)
    gy = np.gradient(lab, axis=0)
    grad2 = (gx * gx + gy * gy).sum(axis=-1)
    grad2 = np.where(mask, grad2, np.inf)

    seeds, step = _seed_grid(mask, target_k)
    seeds = _snap_and_perturb(seeds, mask, grad2)
    k = len(seeds)

    coords = np.argwhere(mask)  # (M, 2) row, col
    px_lab = lab[coords[:, 0], coords[:, 1]]
    centre_rc = seeds.astype(np.float64)
    centre_lab = lab[seeds[:, 0], seeds[:, 1]].astype(np.float64)
    compactness = np.full(k, _SLIC_INITIAL_COMPACTNESS)

    # initial assignment: nearest seed spatially, so no pixel is ever
    # unlabelled even if some window never reaches it
    d_init = ((coords[:, None, :] - centre_rc[None, :, :]) ** 2).sum(axis=-1)
    labels = d_init.argmin(axis=1)

    step2 = step * step
    for _ in range(_SLIC_ITERATIONS):
        best = np.full(len(coords), np.inf)
        assigned = labels.copy()
        for ki in range(k):
            in_win = (np.abs(coords[:, 0] - centre_rc[ki, 0]) <= step) & (
                np.abs(coords[:, 1] - centre_rc[ki, 1]) <= step
            )
            if not in_win.any():
                continue
            sel = np.nonzero(in_win)[0]
            d_lab2 = ((px_lab[sel] - centre_lab[ki]) ** 2).sum(axis=1)
            d_xy2 = ((coords[sel] - centre_rc[ki]) ** 2).sum(axis=1)
            d = d_lab2 / compactness[ki] + d_xy2 / step2
            upd = d < best[sel]
            best[sel[upd]] = d[upd]
            assigned[sel[upd]] = ki
        labels = assigned
        for ki in range(k):
            members = labels == ki
            if not members.any():
                continue
            d_lab2 = ((px_lab[members] - centre_lab[ki]) ** 2).sum(axis=1)
            compactness[ki] = max(1.0, float(d_lab2.max()))
            centre_lab[ki] = px_lab[members].mean(axis=0)
            centre_rc[ki] = coords[members].mean(axis=0)

    raster = np.full(mask.shape, -1, dtype=np.int64)
    raster[coords[:, 0], coords[:, 1]] = labels
    return _enforce_connectivity(raster)


def _enforce_connectivity(raster: np.ndarray) -> np.ndarray:
    """Make labels and 4-connected components coincide.

    Every label's largest component keeps its identity; smaller fragments
    are merged into their largest adjacent component (isolated fragments
    become labels of their own). Output labels are compacted to 0..K-1 in
    raster-scan order of first appearance.
    """
    comps = connected_components(raster + 1, background=0, connectivity=1)
    n_comp = comps.max()
    sizes = np.bincount(comps.ravel(), minlength=n_comp + 1)

    flat_c, flat_r = comps.ravel(), raster.ravel()
    idx = np.nonzero(flat_c > 0)[0]
    orig = np.zeros(n_comp + 1, dtype=np.int64)
    orig[flat_c[idx]] = flat_r[idx]  # every member carries the same label

    # main component per original label = the largest one (lowest id on ties)
    main: dict[int, int] = {}
    for c in range(1, n_comp + 1):
        lbl = int(orig[c])
        if lbl not in main or sizes[c] > sizes[main[lbl]]:
            main[lbl] = c
    is_main = np.zeros(n_comp + 1, dtype=bool)
    for c in main.values():
        is_main[c] = True

    # component adjacency from 4-neighbour pixel pairs
    adj: dict[int, set[int]] = {c: set() for c in range(1, n_comp + 1)}
    v = (comps[1:, :] > 0) & (comps[:-1, :] > 0) & (comps[1:, :] != comps[:-1, :])
    for a, b in zip(comps[1:, :][v], comps[:-1, :][v]):
        adj[a].add(b)
        adj[b].add(a)
    hz = (comps[:, 1:] > 0) & (comps[:, :-1] > 0) & (comps[:, 1:] != comps[:, :-1])
    for a, b in zip(comps[:, 1:][hz], comps[:, :-1][hz]):
        adj[a].add(b)
        adj[b].add(a)

    parent = np.arange(n_comp + 1)

    def find(c: int) -> int:
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for c in range(1, n_comp + 1):
        if is_main[c] or not adj[c]:
            continue
        target = max(adj[c], key=lambda n: (sizes[n], -n))
        ra, rb = find(c), find(target)
        if ra != rb:
            parent[ra] = rb

    roots = np.array([find(c) for c in range(n_comp + 1)])
    out = np.full(raster.shape, -1, dtype=np.int64)
    next_label = 0
    root_to_label: dict[int, int] = {}
    flat_out = out.ravel()
    for i in idx:
        r = roots[flat_c[i]]
        if r not in root_to_label:
            root_to_label[r] = next_label
            next_label += 1
        flat_out[i] = root_to_label[r]
    return out


def place_patches(
    labels: np.ndarray,
    max_patches: int,
    patch_w: int,
    patch_h: int,
    max_overlap: float,
) -> list[tuple[float, float]]:
    """Greedy centroid placement, largest superpixel first.

    A centroid is accepted only if its patch rectangle overlaps every
    already accepted patch by strictly less than ``max_overlap`` of the
    patch area. Stops at ``max_patches`` or when superpixels run out; the
    first centroid is always accepted. Returns (x, y) centres.
    """
    values = labels[labels >= 0]
    if values.size == 0:
        raise ValueError("no superpixels to place patches on")
    ulabels, counts = np.unique(values, return_counts=True)
    order = np.lexsort((ulabels, -counts))

    area = float(patch_w * patch_h)
    accepted: list[tuple[float, float]] = []
    for li in order:
        if len(accepted) >= max_patches:
            break
        rows, cols = np.nonzero(labels == ulabels[li])
        cx = float(round_half_up(cols.mean()))
        cy = float(round_half_up(rows.mean()))
        ok = True
        for ax, ay in accepted:
            inter = max(0.0, patch_w - abs(cx - ax)) * max(0.0, patch_h - abs(cy - ay))
            if inter / area >= max_overlap:
                ok = False
                break
        if ok:
            accepted.append((cx, cy))
    return accepted


def dump_debug_pngs(out_dir, mask: np.ndarray, labels: np.ndarray) -> None:
    """Write palette-coded mask/label rasters for visual inspection."""
    from pathlib import Path

    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask.astype(np.uint8)) * 255).save(out / "placement_mask.png")

    palette = np.array(
        [
            [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
            [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
            [210, 245, 60], [250, 190, 212], [0, 128, 128], [220, 190, 255],
            [170, 110, 40], [255, 250, 200], [128, 0, 0], [170, 255, 195],
            [128, 128, 0], [255, 215, 180], [0, 0, 128], [128, 128, 128],
        ],
        dtype=np.uint8,
    )
    rgb = np.zeros(labels.shape + (3,), dtype=np.uint8)
    fg = labels >= 0
    rgb[fg] = palette[labels[fg] % len(palette)]
    Image.fromarray(rgb).save(out / "placement_labels.png")
