"""Tracker configuration, state, and the end-to-end tracking loop.

A tracking run is: initialise from a first-frame bounding box (segment,
superpixel, place patches, build one colour model per patch), then per
frame localise the patch set, report the expanded enclosing box, and
update the patch models in place.

Randomness is split into four named streams derived from one master seed
(placement, transforms, ties, update), so switching one pipeline stage
off never perturbs the draws seen by the others.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import localisation, placement
from .colour_model import PatchModel, init_model, update_model
from .geometry import Box, MotionPriors
from .placement import SegmenterConfig, pixel_window

__all__ = [
    "TrackerConfig",
    "TrackerState",
    "RngStreams",
    "Tracker",
    "ConfigError",
    "SnapshotError",
    "init",
    "step",
    "snapshot",
    "restore",
    "ABLATION_SWITCHES",
]


class ConfigError(ValueError):
    """Raised for unusable configuration files or values."""


class SnapshotError(ValueError):
    """Raised for corrupt, truncated or incompatible state snapshots."""


ABLATION_SWITCHES = (
    "no_local_opt",
    "no_update",
    "no_segmentation",
    "uniform_placement",
    "default_mbd",
)


@dataclass
class TrackerConfig:
    """All tunables of the pipeline, defaulting to the production values.

    ``default_mbd`` switches the match-quality exponent back to 0.5 (the
    plain Bhattacharyya distance); ``no_local_opt`` disables the window
    refinement stage; the remaining switches disable model updating,
    object segmentation, and the whole placement scheme respectively.
    """

    num_patches: int = 35
    patch_w: int = 5
    patch_h: int = 5
    match_radius: float = 20.0
    mbd_exponent: float = 1.4
    count_rate: float = 0.05
    centre_rate: float = 1.7
    max_overlap: float = 0.25
    max_centres: int = 10
    num_transforms: int = 1000
    num_refined: int = 100
    window: int = 5
    box_expand: float = 0.2
    priors: MotionPriors = field(default_factory=MotionPriors)
    seg: SegmenterConfig = field(default_factory=SegmenterConfig)
    reinit_skip: int = 5
    no_local_opt: bool = False
    no_update: bool = False
    no_segmentation: bool = False
    uniform_placement: bool = False
    default_mbd: bool = False

    @property
    def effective_mbd_exponent(self) -> float:
        return 0.5 if self.default_mbd else self.mbd_exponent

    def validate(self) -> None:
        if min(self.num_patches, self.patch_w, self.patch_h, self.max_centres) < 1:
            raise ConfigError("patch counts and sizes must be at least 1")
        if self.num_transforms < 1:
            raise ConfigError("num_transforms must be at least 1")
        if self.num_refined < 0:
            raise ConfigError("num_refined must be nonnegative")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError("window must be odd and positive")
        if self.match_radius <= 0:
            raise ConfigError("match_radius must be positive")
        if not 0.0 <= self.count_rate <= 1.0:
            raise ConfigError("count_rate must lie in [0, 1]")
        if self.centre_rate < 0 or self.mbd_exponent < 0 or self.box_expand < 0:
            raise ConfigError("rates, exponent and expansion must be nonnegative")
        if not 0.0 < self.max_overlap <= 1.0:
            raise ConfigError("max_overlap must lie in (0, 1]")
        if self.reinit_skip < 0:
            raise ConfigError("reinit_skip must be nonnegative")
        try:
            self.priors.validate()
            self.seg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def ablated(self, *switches: str) -> "TrackerConfig":
        """Copy of this config with the named ablation switches enabled."""
        for sw in switches:
            if sw not in ABLATION_SWITCHES:
                raise ConfigError(f"unknown ablation switch: {sw!r}")
        return dataclasses.replace(self, **{sw: True for sw in switches})

    # --- flat key/value text format -------------------------------------

    _SCALAR_FIELDS = {
        "num_patches": int, "patch_w": int, "patch_h": int,
        "match_radius": float, "mbd_exponent": float, "count_rate": float,
        "centre_rate": float, "max_overlap": float, "max_centres": int,
        "num_transforms": int, "num_refined": int, "window": int,
        "box_expand": float, "reinit_skip": int,
    }
    _PRIOR_FIELDS = {"rot_std": float, "scale_std": float, "tx_frac": float, "ty_frac": float}
    _SEG_FIELDS = {"seg_shrink": float, "seg_grow": float, "seg_threshold": float, "seg_smoothing": float}

    def to_text(self) -> str:
        lines = []
        for key in self._SCALAR_FIELDS:
            lines.append(f"{key} = {getattr(self, key)!r}")
        for key in self._PRIOR_FIELDS:
            lines.append(f"{key} = {getattr(self.priors, key)!r}")
        for key in self._SEG_FIELDS:
            lines.append(f"{key} = {getattr(self.seg, key.removeprefix('seg_'))!r}")
        for key in ABLATION_SWITCHES:
            lines.append(f"{key} = {'true' if getattr(self, key) else 'false'}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrackerConfig":
        scalars: dict = {}
        priors: dict = {}
        seg: dict = {}
        switches: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, _, value = (part.strip() for part in line.partition("="))
            try:
                if key in cls._SCALAR_FIELDS:
                    scalars[key] = cls._SCALAR_FIELDS[key](value)
                elif key in cls._PRIOR_FIELDS:
                    priors[key] = float(value)
                elif key in cls._SEG_FIELDS:
                    seg[key.removeprefix("seg_")] = float(value)
                elif key in ABLATION_SWITCHES:
                    if value.lower() not in ("true", "false"):
                        raise ValueError("expected true/false")
                    switches[key] = value.lower() == "true"
                else:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        cfg = cls(
            **scalars,
            priors=MotionPriors(**priors) if priors else MotionPriors(),
            seg=SegmenterConfig(**seg) if seg else SegmenterConfig(),
            **switches,
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "TrackerConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


_STREAM_NAMES = ("placement", "transforms", "ties", "update")


class RngStreams:
    """Named random streams split from one master seed.

    Placement covers segmentation sampling and first-frame model
    construction (including its count-tie pruning); transforms covers
    candidate motion draws; ties covers selection tie-breaking during
    localisation; update covers the sampling pass that builds fresh
    centres during model updates.
    """

    def __init__(self, seed: int | None = 0):
        children = np.random.SeedSequence(seed).spawn(len(_STREAM_NAMES))
        for name, child in zip(_STREAM_NAMES, children):
            setattr(self, name, np.random.default_rng(child))

    placement: np.random.Generator
    transforms: np.random.Generator
    ties: np.random.Generator
    update: np.random.Generator

    def state_dict(self) -> dict:
        return {name: getattr(self, name).bit_generator.state for name in _STREAM_NAMES}

    def load_state_dict(self, states: dict) -> None:
        for name in _STREAM_NAMES:
            getattr(self, name).bit_generator.state = states[name]


@dataclass
class TrackerState:
    """Everything the tracker carries between frames."""

    patches: list[PatchModel]
    prev_box: Box
    frame_index: int
    rngs: RngStreams


def _clamp_box(box: Box, shape) -> Box:
    h, w = shape[0], shape[1]
    x0 = min(max(box.x, 0.0), float(w))
    y0 = min(max(box.y, 0.0), float(h))
    x1 = min(max(box.x + box.w, 0.0), float(w))
    y1 = min(max(box.y + box.h, 0.0), float(h))
    return Box(x0, y0, x1 - x0, y1 - y0)


def _uniform_grid_centres(box: Box, n: int) -> list[tuple[float, float]]:
    k = int(np.ceil(np.sqrt(n)))
    xs = box.x + (np.arange(k) + 0.5) * box.w / k
    ys = box.y + (np.arange(k) + 0.5) * box.h / k
    centres = [(float(x), float(y)) for y in ys for x in xs]
    return centres[:n]


def init(
    frame: np.ndarray,
    box: Box,
    cfg: TrackerConfig,
    seed: int = 0,
    *,
    rngs: RngStreams | None = None,
    segmenter=None,
    debug_dir=None,
) -> TrackerState:
    """Build the initial tracker state from a first-frame bounding box.

    ``segmenter`` replaces the default object segmentation; it is called
    as ``segmenter(frame, box, cfg.seg, rng, match_radius)`` and must
    return a boolean mask aligned to the box's pixel window.
    """
    cfg.validate()
    clamped = _clamp_box(box, frame.shape)
    if clamped.w <= 0 or clamped.h <= 0:
        raise ValueError("bounding box does not intersect the frame")
    rngs = rngs if rngs is not None else RngStreams(seed)

    if cfg.uniform_placement:
        centres = _uniform_grid_centres(clamped, cfg.num_patches)
    else:
        x0, y0, x1, y1 = pixel_window(clamped, frame.shape)
        region = frame[y0:y1, x0:x1]
        if cfg.no_segmentation:
            mask = np.ones(region.shape[:2], dtype=bool)
        else:
            seg_fn = segmenter if segmenter is not None else placement.segment_object
            mask = seg_fn(frame, clamped, cfg.seg, rngs.placement, cfg.match_radius)
        labels = placement.slico_superpixels(region, mask, cfg.num_patches, rngs.placement)
        if debug_dir is not None:
            placement.dump_debug_pngs(debug_dir, mask, labels)
        region_centres = placement.place_patches(
            labels, cfg.num_patches, cfg.patch_w, cfg.patch_h, cfg.max_overlap
        )
        centres = [(cx + x0, cy + y0) for cx, cy in region_centres]

    patches = []
    for centre in centres:
        pixels, valid = localisation.extract_patch_pixels(
            frame, centre, cfg.patch_w, cfg.patch_h
        )
        if valid == 0:
            continue
        patches.append(
            init_model(
                pixels,
                cfg.match_radius,
                cfg.max_centres,
                rngs.placement,
                location=centre,
                patch_w=cfg.patch_w,
                patch_h=cfg.patch_h,
            )
        )
    if not patches:
        centre = clamped.centre
        pixels, valid = localisation.extract_patch_pixels(
            frame, centre, cfg.patch_w, cfg.patch_h
        )
        patches.append(
            init_model(
                pixels,
                cfg.match_radius,
                cfg.max_centres,
                rngs.placement,
                location=centre,
                patch_w=cfg.patch_w,
                patch_h=cfg.patch_h,
            )
        )
    return TrackerState(patches=patches, prev_box=clamped, frame_index=0, rngs=rngs)


def step(frame: np.ndarray, state: TrackerState, cfg: TrackerConfig):
    """Advance one frame: localise, report the box, update the models.

    A patch's model is only updated when at least half of its block lies
    inside the frame, so border patches do not learn padding artefacts.
    Returns (box, per-patch qualities, state); the state is updated in
    place.
    """
    result = localisation.localise(frame, state, cfg)
    min_valid = 0.5 * cfg.patch_w * cfg.patch_h
    for p, patch in enumerate(state.patches):
        patch.location = (float(result.centres[p, 0]), float(result.centres[p, 1]))
        if cfg.no_update:
            continue
        pixels, valid = localisation.extract_patch_pixels(
            frame, patch.location, cfg.patch_w, cfg.patch_h
        )
        if valid >= min_valid:
            state.patches[p] = update_model(
                patch,
                pixels,
                cfg.count_rate,
                cfg.centre_rate,
                cfg.match_radius,
                state.rngs.update,
            )
    state.prev_box = result.box
    state.frame_index += 1
    return result.box, result.qualities, state


# --- state snapshots ----------------------------------------------------

_MAGIC = b"PTRK"
_VERSION = 1


def _pack_section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def snapshot(state: TrackerState, cfg: TrackerConfig) -> bytes:
    """Serialise the full state (models, box, counters, rng positions).

    Versioned little-endian format: magic, version, section count, then
    length-prefixed sections. The configuration text is embedded so a
    snapshot cannot silently be restored under a different configuration.
    """
    parts = [_MAGIC, struct.pack("<HI", _VERSION, 4)]
    parts.append(_pack_section(b"CONF", cfg.to_text().encode("utf-8")))
    meta = struct.pack(
        "<4dq",
        state.prev_box.x,
        state.prev_box.y,
        state.prev_box.w,
        state.prev_box.h,
        state.frame_index,
    )
    parts.append(_pack_section(b"META", meta))
    parts.append(
        _pack_section(b"RNGS", json.dumps(state.rngs.state_dict()).encode("utf-8"))
    )
    buf = bytearray(struct.pack("<I", len(state.patches)))
    for patch in state.patches:
        buf += struct.pack(
            "<2dIId",
            patch.location[0],
            patch.location[1],
            patch.patch_w,
            patch.patch_h,
            patch.match_radius,
        )
        buf += struct.pack("<I", patch.n_pairs)
        buf += patch.centres.astype("<f8").tobytes()
        buf += patch.counts.astype("<f8").tobytes()
    parts.append(_pack_section(b"PTCH", bytes(buf)))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotError("snapshot truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def restore(data: bytes, cfg: TrackerConfig) -> TrackerState:
    """Rebuild a TrackerState from snapshot bytes; the inverse of snapshot."""
    r = _Reader(data)
    if r.take(4) != _MAGIC:
        raise SnapshotError("not a tracker snapshot")
    version, n_sections = r.unpack("<HI")
    if version != _VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    sections: dict[bytes, bytes] = {}
    for _ in range(n_sections):
        tag = r.take(4)
        (length,) = r.unpack("<Q")
        sections[tag] = r.take(length)
    for tag in (b"CONF", b"META", b"RNGS", b"PTCH"):
        if tag not in sections:
            raise SnapshotError(f"snapshot missing section {tag!r}")

    if sections[b"CONF"].decode("utf-8") != cfg.to_text():
        raise SnapshotError("snapshot was written under a different configuration")

    x, y, w, h, frame_index = struct.unpack("<4dq", sections[b"META"])
    rngs = RngStreams(0)
    try:
        states = json.loads(sections[b"RNGS"].decode("utf-8"))
        rngs.load_state_dict(states)
    except (ValueError, KeyError) as exc:
        raise SnapshotError(f"corrupt rng section: {exc}") from exc

    pr = _Reader(sections[b"PTCH"])
    (n_patches,) = pr.unpack("<I")
    patches = []
    for _ in range(n_patches):
        lx, ly, pw, ph, radius = pr.unpack("<2dIId")
        (n_pairs,) = pr.unpack("<I")
        centres = np.frombuffer(pr.take(n_pairs * 3 * 8), dtype="<f8").reshape(n_pairs, 3)
        counts = np.frombuffer(pr.take(n_pairs * 8), dtype="<f8")
        patches.append(
            PatchModel(
                location=(lx, ly),
                centres=centres.astype(np.float64),
                counts=counts.astype(np.float64),
                patch_w=pw,
                patch_h=ph,
                match_radius=radius,
            )
        )
    return TrackerState(
        patches=patches, prev_box=Box(x, y, w, h), frame_index=frame_index, rngs=rngs
    )


class Tracker:
    """Single-object tracker bound to one config and one master seed.

    The usual loop is ``init`` on the first frame's box followed by one
    ``step`` per subsequent frame. Re-initialising mid-sequence (as the
    supervised protocol does) keeps the same random streams rolling.
    """

    def __init__(self, cfg: TrackerConfig | None = None, seed: int = 0, segmenter=None):
        self.cfg = cfg if cfg is not None else TrackerConfig()
        self.cfg.validate()
        self.rngs = RngStreams(seed)
        self.segmenter = segmenter
        self.state: TrackerState | None = None

    def init(self, frame: np.ndarray, box: Box, debug_dir=None) -> None:
        self.state = init(
            frame,
            box,
            self.cfg,
            rngs=self.rngs,
            segmenter=self.segmenter,
            debug_dir=debug_dir,
        )

    def step(self, frame: np.ndarray):
        if self.state is None:
            raise RuntimeError("tracker not initialised")
        box, qualities, _ = step(frame, self.state, self.cfg)
        return box, qualities
