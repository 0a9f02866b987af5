"""Non-shearing affine transforms, boxes and overlap arithmetic.

A candidate object motion is a similarity transform: rotation and
isotropic scale about an anchor point followed by a translation. Sampled
translations are relative displacements of the anchor, so applying a
transform recentres the anchor and then offsets it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TransformParams",
    "Box",
    "MotionPriors",
    "sample_transform",
    "apply_transform",
    "enclosing_aabb",
    "expand_box",
    "iou",
    "round_half_up",
]


def round_half_up(x):
    """Round to nearest integer, halves away from the origin-side bias of
    banker's rounding; used everywhere a continuous coordinate becomes a
    pixel index so adjacent .5 values behave consistently."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


@dataclass(frozen=True)
class TransformParams:
    rotation: float  # radians
    scale: float  # isotropic, > 0
    tx: float  # pixels, displacement of the anchor
    ty: float


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with top-left (x, y) and nonnegative size."""

    x: float
    y: float
    w: float
    h: float

    @property
    def centre(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class MotionPriors:
    """Scales of the per-frame motion distributions.

    Rotation and scale are Gaussian; translations are Laplace with scale
    proportional to the previous predicted width/height.
    """

    rot_std: float = math.pi / 16.0
    scale_std: float = 0.02
    tx_frac: float = 0.15
    ty_frac: float = 0.1

    def validate(self) -> None:
        if min(self.rot_std, self.scale_std, self.tx_frac, self.ty_frac) <= 0:
            raise ValueError("motion prior scales must be positive")


def sample_transform(
    priors: MotionPriors, prev_box: Box, rng: np.random.Generator
) -> TransformParams:
    """Draw one candidate transform for the next frame.

    Scale is redrawn while nonpositive so reflections can never occur
    (vanishing probability at the default std, but the guard is cheap).
    """
    if prev_box.w <= 0 or prev_box.h <= 0:
        raise ValueError("previous box must have positive size")
    rotation = rng.normal(0.0, priors.rot_std)
    scale = rng.normal(1.0, priors.scale_std)
    while scale <= 0.0:
        scale = rng.normal(1.0, priors.scale_std)
    tx = rng.laplace(0.0, prev_box.w * priors.tx_frac)
    ty = rng.laplace(0.0, prev_box.h * priors.ty_frac)
    return TransformParams(rotation=rotation, scale=scale, tx=tx, ty=ty)


def apply_transform(t: TransformParams, anchor, points) -> np.ndarray:
    """Rotate and scale ``points`` about ``anchor``, then displace by (tx, ty).

    Accepts a single (x, y) point or an (N, 2) array; returns float64 of
    the same leading shape.
    """
    pts = np.asarray(points, dtype=np.float64)
    ax, ay = float(anchor[0]), float(anchor[1])
    dx = pts[..., 0] - ax
    dy = pts[..., 1] - ay
    c = math.cos(t.rotation)
    s = math.sin(t.rotation)
    out = np.empty_like(pts)
    out[..., 0] = t.scale * (c * dx - s * dy) + ax + t.tx
    out[..., 1] = t.scale * (s * dx + c * dy) + ay + t.ty
    return out


def enclosing_aabb(centres, patch_w: float, patch_h: float) -> Box:
    """Minimal axis-aligned box covering every patch rectangle."""
    pts = np.asarray(centres, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("no patch centres to enclose")
    half_w, half_h = patch_w / 2.0, patch_h / 2.0
    x0 = float(pts[:, 0].min()) - half_w
    y0 = float(pts[:, 1].min()) - half_h
    x1 = float(pts[:, 0].max()) + half_w
    y1 = float(pts[:, 1].max()) + half_h
    return Box(x0, y0, x1 - x0, y1 - y0)


def expand_box(b: Box, factor: float) -> Box:
    """Grow width and height by ``factor`` keeping the centre fixed."""
    if factor < 0:
        raise ValueError("expansion factor must be nonnegative")
    new_w = b.w * (1.0 + factor)
    new_h = b.h * (1.0 + factor)
    cx, cy = b.centre
    return Box(cx - new_w / 2.0, cy - new_h / 2.0, new_w, new_h)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    inter = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union
