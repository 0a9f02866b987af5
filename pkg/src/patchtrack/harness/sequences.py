"""Image-sequence and ground-truth ingestion.

A sequence is an ordered list of frame image files plus one ground-truth
annotation per frame. Annotations are comma-separated lines: four values
are an axis-aligned ``x,y,w,h`` rectangle, eight values a 4-point polygon
which is scored through its minimal enclosing axis-aligned box (the
tracker only ever predicts axis-aligned boxes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..geometry import Box

__all__ = ["Sequence", "SequenceError", "load_sequence", "parse_ground_truth_line"]

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".ppm")


class SequenceError(Exception):
    """Unreadable frames, malformed annotations or mismatched counts."""


def parse_ground_truth_line(line: str, lineno: int = 0) -> tuple[Box, np.ndarray | None]:
    """Parse one annotation line into (aabb, polygon-or-None)."""
    parts = [p for p in line.strip().split(",") if p != ""]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise SequenceError(f"ground truth line {lineno}: {exc}") from exc
    if len(values) == 4:
        x, y, w, h = values
        return Box(x, y, w, h), None
    if len(values) == 8:
        poly = np.array(values, dtype=np.float64).reshape(4, 2)
        x0, y0 = poly.min(axis=0)
        x1, y1 = poly.max(axis=0)
        return Box(x0, y0, x1 - x0, y1 - y0), poly
    raise SequenceError(
        f"ground truth line {lineno}: expected 4 or 8 values, got {len(values)}"
    )


@dataclass
class Sequence:
    """Frame paths plus per-frame ground truth."""

    name: str
    frame_paths: list[Path]
    ground_truth: list[Box]
    polygons: list[np.ndarray | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame_paths)

    def frame(self, index: int) -> np.ndarray:
        """Decode frame ``index`` as an (H, W, 3) uint8 RGB array."""
        path = self.frame_paths[index]
        try:
            with Image.open(path) as img:
                return np.asarray(img.convert("RGB"), dtype=np.uint8)
        except (OSError, UnidentifiedImageError) as exc:
            raise SequenceError(f"frame {index} ({path}): {exc}") from exc


def _list_frames(directory: Path) -> list[Path]:
    frames = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    return frames


def load_sequence(path, gt_path=None, name: str | None = None) -> Sequence:
    """Load a sequence from a frame directory or a manifest file.

    A manifest is a text file listing one frame path per line, resolved
    relative to the manifest's directory. The ground-truth file defaults
    to ``groundtruth.txt`` next to the frames.
    """
    path = Path(path)
    if path.is_dir():
        frames = _list_frames(path)
        base = path
    elif path.is_file():
        base = path.parent
        with open(path, "r", encoding="utf-8") as fh:
            frames = [base / line.strip() for line in fh if line.strip()]
    else:
        raise SequenceError(f"no such sequence path: {path}")
    if gt_path is None:
        gt_path = base / "groundtruth.txt"
    gt_path = Path(gt_path)
    if not gt_path.is_file():
        raise SequenceError(f"ground truth file not found: {gt_path}")

    boxes: list[Box] = []
    polys: list[np.ndarray | None] = []
    with open(gt_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            box, poly = parse_ground_truth_line(raw, lineno)
            boxes.append(box)
            polys.append(poly)

    if len(frames) < 2:
        raise SequenceError(f"sequence needs at least 2 frames, found {len(frames)}")
    if len(boxes) != len(frames):
        raise SequenceError(
            f"{len(frames)} frames but {len(boxes)} ground-truth lines"
        )
    if name is None:
        name = path.stem if path.is_file() else path.name
    return Sequence(name=name, frame_paths=frames, ground_truth=boxes, polygons=polys)
