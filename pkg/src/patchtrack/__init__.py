"""Part-based visual object tracking with sparse colour-sample patch models.

The package is organised as a small numpy library:

* :mod:`patchtrack.colour_model` -- the per-patch colour sample model and
  its similarity / update machinery,
* :mod:`patchtrack.geometry` -- similarity transforms, boxes, IoU,
* :mod:`patchtrack.placement` -- object segmentation, superpixels and
  greedy patch placement,
* :mod:`patchtrack.localisation` -- per-frame global + local search,
* :mod:`patchtrack.tracker` -- configuration, state and the end-to-end
  tracking loop,
* :mod:`patchtrack.harness` -- sequence I/O, evaluation protocols,
  synthetic data and result export.

Images are numpy ``(H, W, 3)`` uint8 RGB arrays throughout; points and
boxes use ``(x, y)`` pixel coordinates.
"""

from .colour_model import (
    PatchModel,
    bhattacharyya_coefficient,
    init_model,
    match_counts,
    mbd,
    object_quality,
    patch_quality,
    update_model,
)
from .geometry import (
    Box,
    MotionPriors,
    TransformParams,
    apply_transform,
    enclosing_aabb,
    expand_box,
    iou,
    sample_transform,
)
from .tracker import Tracker, TrackerConfig, TrackerState, SnapshotError

__version__ = "0.1.0"

__all__ = [
    "Box",
    "MotionPriors",
    "PatchModel",
    "SnapshotError",
    "Tracker",
    "TrackerConfig",
    "TrackerState",
    "TransformParams",
    "apply_transform",
    "bhattacharyya_coefficient",
    "enclosing_aabb",
    "expand_box",
    "init_model",
    "iou",
    "match_counts",
    "mbd",
    "object_quality",
    "patch_quality",
    "sample_transform",
    "update_model",
]
