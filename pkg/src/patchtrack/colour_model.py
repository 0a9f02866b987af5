"""Sparse colour-sample patch models.

A patch is described by a small set of (colour centre, match count) pairs:
an empirical histogram whose bins are colour samples taken from the patch
itself. A pixel "matches" a centre when its Euclidean RGB distance is
strictly below the matching radius; when several centres are in range the
closest one wins (exact distance ties go to the lowest-index centre so
results are reproducible).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PatchModel",
    "init_model",
    "match_counts",
    "bhattacharyya_coefficient",
    "mbd",
    "patch_quality",
    "object_quality",
    "update_model",
]


def as_pixel_array(pixels) -> np.ndarray:
    """Coerce a sequence of RGB triples to an (N, 3) float64 array."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 3)
    if arr.ndim == 1:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected RGB triples, got shape {arr.shape}")
    return arr


@dataclass
class PatchModel:
    """Location plus the (centre, count) pairs of one patch.

    Centres and counts are stored as reals: count interpolation and centre
    drift during updates are non-integral, and centres are clamped to
    [0, 255] per channel after any move.
    """

    location: tuple[float, float]
    centres: np.ndarray  # (S, 3) float64
    counts: np.ndarray  # (S,) float64, every entry > 0
    patch_w: int
    patch_h: int
    match_radius: float = 20.0

    @property
    def n_pairs(self) -> int:
        return len(self.counts)

    @property
    def n_pixels(self) -> int:
        """Fixed normalising denominator for match histograms."""
        return self.patch_w * self.patch_h

    @property
    def normalised_counts(self) -> np.ndarray:
        return self.counts / self.n_pixels

    def copy(self) -> "PatchModel":
        return PatchModel(
            location=tuple(self.location),
            centres=self.centres.copy(),
            counts=self.counts.copy(),
            patch_w=self.patch_w,
            patch_h=self.patch_h,
            match_radius=self.match_radius,
        )


def _squared_distances(pixels: np.ndarray, centres: np.ndarray) -> np.ndarray:
    """Pairwise squared RGB distances, shape pixels.shape[:-1] + (S,)."""
    diff = pixels[..., None, :] - centres
    return (diff * diff).sum(axis=-1)


def nearest_centre_matches(
    pixels: np.ndarray, centres: np.ndarray, match_radius: float
) -> tuple[np.ndarray, np.ndarray]:
    """Index of the closest centre per pixel and whether it is within radius.

    ``argmin`` returns the first minimum, which implements the
    lowest-index rule for exact distance ties.
    """
    d2 = _squared_distances(pixels, centres)
    idx = d2.argmin(axis=-1)
    matched = d2.min(axis=-1) < match_radius * match_radius
    return idx, matched


def sample_centre_counts(
    pixels: np.ndarray, match_radius: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Run the stochastic sampling pass over ``pixels`` once.

    Pixels are visited in an rng-drawn order; the first becomes a centre
    with count 1, later ones either increment their nearest in-range
    centre or found a new one. Returns (centres, counts), uncapped.
    """
    n = len(pixels)
    order = rng.permutation(n)
    r2 = match_radius * match_radius
    centres = np.empty((n, 3), dtype=np.float64)
    counts = np.zeros(n, dtype=np.float64)
    s = 0
    for i in order:
        px = pixels[i]
        if s > 0:
            d2 = ((centres[:s] - px) ** 2).sum(axis=1)
            j = int(d2.argmin())
            if d2[j] < r2:
                counts[j] += 1.0
                continue
        centres[s] = px
        counts[s] = 1.0
        s += 1
    return centres[:s].copy(), counts[:s].copy()


def init_model(
    pixels,
    match_radius: float,
    max_centres: int,
    rng: np.random.Generator,
    *,
    location: tuple[float, float] = (0.0, 0.0),
    patch_w: int | None = None,
    patch_h: int | None = None,
) -> PatchModel:
    """Build a patch model from the patch's pixels.

    After the sampling pass, if more than ``max_centres`` pairs exist the
    lowest-count pair is removed repeatedly (count ties broken by the rng)
    until exactly ``max_centres`` remain. When patch dimensions are not
    given the histogram denominator defaults to the number of pixels
    supplied.
    """
    arr = as_pixel_array(pixels)
    if len(arr) == 0:
        raise ValueError("cannot initialise a patch model from zero pixels")
    if match_radius <= 0:
        raise ValueError("match_radius must be positive")
    if max_centres < 1:
        raise ValueError("max_centres must be at least 1")

    centres, counts = sample_centre_counts(arr, match_radius, rng)
    while len(counts) > max_centres:
        lowest = np.flatnonzero(counts == counts.min())
        victim = lowest[rng.integers(len(lowest))]
        centres = np.delete(centres, victim, axis=0)
        counts = np.delete(counts, victim)

    if patch_w is None or patch_h is None:
        patch_w, patch_h = len(arr), 1
    return PatchModel(
        location=tuple(location),
        centres=centres,
        counts=counts,
        patch_w=int(patch_w),
        patch_h=int(patch_h),
        match_radius=float(match_radius),
    )


def match_counts(model: PatchModel, pixels) -> np.ndarray:
    """Histogram of candidate pixels against the model's centres.

    Each pixel within the matching radius of at least one centre adds one
    to its closest centre's slot; others contribute nothing. The result is
    divided by the patch pixel count, so entries sum to at most 1.
    """
    if model.n_pairs < 1:
        raise ValueError("model has no centre-count pairs")
    arr = as_pixel_array(pixels)
    s = model.n_pairs
    if len(arr) == 0:
        return np.zeros(s, dtype=np.float64)
    idx, matched = nearest_centre_matches(arr, model.centres, model.match_radius)
    counts = np.bincount(idx[matched], minlength=s).astype(np.float64)
    return counts / model.n_pixels


def bhattacharyya_coefficient(p, q) -> float:
    """Overlap between two (sub-)normalised histograms, in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"histogram length mismatch: {p.shape} vs {q.shape}")
    return float(np.sqrt(p * q).sum())


def mbd_from_bc(bc, exponent: float) -> np.ndarray:
    """Elementwise (1 - bc)^exponent with perfect overlap pinned to 0.

    Shared by the scalar operation and the vectorised localisation path;
    going through one ufunc call keeps the two bit-identical (numpy's
    vectorised pow differs from libm pow in the last ulp).
    """
    base = 1.0 - np.asarray(bc, dtype=np.float64)
    base = np.maximum(base, 0.0)  # guard fp overshoot of BC past 1
    return np.where(base == 0.0, 0.0, base**exponent)


def mbd(p, q, exponent: float) -> float:
    """Modified Bhattacharyya distance (1 - BC)^exponent.

    The exponent controls how strongly good matches are favoured;
    0.5 recovers the plain Bhattacharyya/Hellinger distance. Perfect
    overlap maps to 0 for every exponent (including 0).
    """
    if exponent < 0:
        raise ValueError("exponent must be nonnegative")
    bc = bhattacharyya_coefficient(p, q)
    return float(mbd_from_bc(np.array([bc]), exponent)[0])


def patch_quality(model: PatchModel, candidate_pixels, exponent: float) -> float:
    """Match quality of a candidate pixel block against the model, in [0, 1]."""
    h = model.normalised_counts
    h_cand = match_counts(model, candidate_pixels)
    return 1.0 - mbd(h, h_cand, exponent)


def object_quality(qualities) -> float:
    """Mean per-patch quality of a candidate patch set."""
    arr = np.asarray(qualities, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot average an empty quality list")
    return float(np.mean(arr))


def update_model(
    model: PatchModel,
    matched_pixels,
    count_rate: float,
    centre_rate: float,
    match_radius: float,
    rng: np.random.Generator,
) -> PatchModel:
    """Dual-rate update of a model from the pixels at its predicted location.

    Counts are interpolated towards the per-centre match totals at
    ``count_rate``; matched centres move towards (or past, for rates > 1)
    the mean of their matched pixels at ``centre_rate`` and are clamped to
    [0, 255]. Unmatched pixels found a fresh set of pairs (built by the
    same sampling pass, uncapped) whose counts are scaled by
    ``count_rate``. Finally every pair with count below ``count_rate`` is
    removed.
    """
    if not 0.0 <= count_rate <= 1.0:
        raise ValueError("count_rate must lie in [0, 1]")
    if centre_rate < 0.0:
        raise ValueError("centre_rate must be nonnegative")
    arr = as_pixel_array(matched_pixels)
    s = model.n_pairs
    centres = model.centres.copy()
    counts = model.counts.copy()

    if len(arr) > 0:
        idx, in_range = nearest_centre_matches(arr, centres, match_radius)
        matched_idx = idx[in_range]
        per_centre = np.bincount(matched_idx, minlength=s).astype(np.float64)
        unmatched = arr[~in_range]
    else:
        per_centre = np.zeros(s, dtype=np.float64)
        unmatched = arr

    counts = count_rate * per_centre + (1.0 - count_rate) * counts

    moved = per_centre > 0
    if moved.any() and len(arr) > 0:
        sums = np.zeros((s, 3), dtype=np.float64)
        np.add.at(sums, matched_idx, arr[in_range])
        means = sums[moved] / per_centre[moved, None]
        centres[moved] = centre_rate * means + (1.0 - centre_rate) * centres[moved]
        np.clip(centres, 0.0, 255.0, out=centres)

    if len(unmatched) > 0 and count_rate > 0.0:
        born_centres, born_counts = sample_centre_counts(unmatched, match_radius, rng)
        centres = np.vstack([centres, born_centres])
        counts = np.concatenate([counts, count_rate * born_counts])

    keep = counts >= count_rate
    return PatchModel(
        location=tuple(model.location),
        centres=centres[keep],
        counts=counts[keep],
        patch_w=model.patch_w,
        patch_h=model.patch_h,
        match_radius=model.match_radius,
    )
