"""Synthetic sequence generation with exact ground truth.

Renders a textured rectangle or ellipse moving over a static textured
background. Motion is translation, rotation and (possibly anisotropic)
scaling per frame; an optional illumination ramp brightens object and
background identically and an optional occluder bar can be drawn on top.
Ground truth is computed analytically from the motion parameters, never
from the rendered pixels: axis-aligned boxes while the object never
rotates, 4-point polygons otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..geometry import Box
from .sequences import Sequence, SequenceError, load_sequence

__all__ = ["SyntheticSpec", "make_synthetic"]

# Default palettes keep object and background colours far apart in RGB
# (well beyond the default matching radius) so scenes are segmentable.
_OBJECT_PALETTE = np.array(
    [[220, 40, 40], [240, 160, 40], [200, 220, 60], [250, 90, 120], [255, 210, 90]],
    dtype=np.uint8,
)
_BACKGROUND_PALETTE = np.array(
    [[30, 60, 90], [60, 90, 30], [20, 20, 80], [80, 40, 90], [40, 80, 80]],
    dtype=np.uint8,
)


@dataclass
class SyntheticSpec:
    """Scenario descriptor; see the module docstring for semantics.

    ``scale``/``scale_x``/``scale_y`` are per-frame multipliers (1.0 means
    no change); ``rotate`` is radians per frame; ``illumination`` is added
    brightness per frame. ``background`` is ``"noise"`` (independent pixels
    in a dark band) or ``"blocks"`` (static homogeneous colour blocks that
    give background regions trackable structure).
    """

    name: str = "synthetic"
    width: int = 320
    height: int = 240
    frames: int = 100
    shape: str = "rect"  # "rect" | "ellipse"
    object_w: int = 80
    object_h: int = 60
    start_x: float = 80.0  # object centre in frame 0
    start_y: float = 80.0
    dx: float = 0.0
    dy: float = 0.0
    rotate: float = 0.0
    scale: float = 1.0
    scale_x: float | None = None
    scale_y: float | None = None
    illumination: float = 0.0
    background: str = "noise"
    object_block: int = 10
    background_block: int = 16
    occluder: dict | None = None
    tags: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.frames < 2:
            raise ValueError("a sequence needs at least 2 frames")
        if self.shape not in ("rect", "ellipse"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.background not in ("noise", "blocks"):
            raise ValueError(f"unknown background {self.background!r}")
        if min(self.width, self.height, self.object_w, self.object_h) < 8:
            raise ValueError("canvas and object must be at least 8 px")
        if self.scale <= 0 or (self.scale_x or 1) <= 0 or (self.scale_y or 1) <= 0:
            raise ValueError("scale factors must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        data = json.loads(text)
        spec = cls(**data)
        spec.validate()
        return spec

    @classmethod
    def from_file(cls, path) -> "SyntheticSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _blocky_texture(
    h: int, w: int, block: int, palette: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    by = math.ceil(h / block)
    bx = math.ceil(w / block)
    picks = palette[rng.integers(len(palette), size=(by, bx))]
    return np.repeat(np.repeat(picks, block, axis=0), block, axis=1)[:h, :w]


def _frame_motion(spec: SyntheticSpec, t: int):
    angle = spec.rotate * t
    sx = (spec.scale_x if spec.scale_x is not None else spec.scale) ** t
    sy = (spec.scale_y if spec.scale_y is not None else spec.scale) ** t
    cx = spec.start_x + spec.dx * t
    cy = spec.start_y + spec.dy * t
    return angle, sx, sy, cx, cy


def _gt_corners(spec: SyntheticSpec, t: int) -> np.ndarray:
    angle, sx, sy, cx, cy = _frame_motion(spec, t)
    hw, hh = spec.object_w / 2.0, spec.object_h / 2.0
    base = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
    scaled = base * (sx, sy)
    c, s = math.cos(angle), math.sin(angle)
    rot = scaled @ np.array([[c, -s], [s, c]]).T
    return rot + (cx, cy)


def _render_frame(
    spec: SyntheticSpec, t: int, bg: np.ndarray, tex: np.ndarray
) -> np.ndarray:
    frame = bg.copy()
    angle, sx, sy, cx, cy = _frame_motion(spec, t)
    corners = _gt_corners(spec, t)
    x0 = max(0, int(math.floor(corners[:, 0].min())))
    y0 = max(0, int(math.floor(corners[:, 1].min())))
    x1 = min(spec.width, int(math.ceil(corners[:, 0].max())) + 1)
    y1 = min(spec.height, int(math.ceil(corners[:, 1].max())) + 1)
    if x1 > x0 and y1 > y0:
        ys, xs = np.mgrid[y0:y1, x0:x1]
        px = xs - cx
        py = ys - cy
        c, s = math.cos(-angle), math.sin(-angle)
        ux = (c * px - s * py) / sx + spec.object_w / 2.0
        uy = (s * px + c * py) / sy + spec.object_h / 2.0
        ti = np.floor(ux).astype(np.int64)
        tj = np.floor(uy).astype(np.int64)
        inside = (ti >= 0) & (ti < spec.object_w) & (tj >= 0) & (tj < spec.object_h)
        if spec.shape == "ellipse":
            nx = (ux / spec.object_w - 0.5) * 2.0
            ny = (uy / spec.object_h - 0.5) * 2.0
            inside &= nx * nx + ny * ny <= 1.0
        region = frame[y0:y1, x0:x1]
        region[inside] = tex[tj[inside], ti[inside]]

    if spec.illumination:
        shift = round(spec.illumination * t)
        frame = np.clip(frame.astype(np.int16) + shift, 0, 255).astype(np.uint8)

    occ = spec.occluder
    if occ and occ.get("start", 0) <= t < occ.get("stop", spec.frames):
        pos = int(round(occ.get("position", 0) + occ.get("speed", 0.0) * (t - occ.get("start", 0))))
        thick = int(occ.get("thickness", 10))
        colour = np.array(occ.get("colour", [255, 255, 255]), dtype=np.uint8)
        if occ.get("axis", "v") == "v":
            frame[:, max(0, pos) : max(0, pos + thick)] = colour
        else:
            frame[max(0, pos) : max(0, pos + thick), :] = colour
    return frame


def make_synthetic(spec: SyntheticSpec, seed: int, out_dir) -> Sequence:
    """Materialise the scenario to ``out_dir`` and load it back.

    Writes ``%06d.png`` frames, ``groundtruth.txt`` and the descriptor as
    ``descriptor.json``. Returns the sequence as the loader sees it, so
    on-disk artefacts and in-memory view can never drift apart.
    """
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    if spec.background == "noise":
        bg = rng.integers(10, 100, size=(spec.height, spec.width, 3)).astype(np.uint8)
    else:
        bg = _blocky_texture(
            spec.height, spec.width, spec.background_block, _BACKGROUND_PALETTE, rng
        )
    tex = _blocky_texture(
        spec.object_h, spec.object_w, spec.object_block, _OBJECT_PALETTE, rng
    )

    axis_aligned = spec.rotate == 0.0
    gt_lines = []
    for t in range(spec.frames):
        frame = _render_frame(spec, t, bg, tex)
        Image.fromarray(frame).save(out / f"{t:06d}.png")
        corners = _gt_corners(spec, t)
        if axis_aligned:
            x0, y0 = (float(v) for v in corners.min(axis=0))
            x1, y1 = (float(v) for v in corners.max(axis=0))
            gt_lines.append(f"{x0!r},{y0!r},{x1 - x0!r},{y1 - y0!r}")
        else:
            gt_lines.append(",".join(repr(float(v)) for v in corners.ravel()))
    (out / "groundtruth.txt").write_text("\n".join(gt_lines) + "\n", encoding="utf-8")
    (out / "descriptor.json").write_text(spec.to_json() + "\n", encoding="utf-8")
    return load_sequence(out, name=spec.name)
