"""Shared fixtures and scene builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from patchtrack.geometry import Box

OBJECT_PALETTE = np.array(
    [[220, 40, 40], [240, 160, 40], [200, 220, 60], [250, 90, 120], [255, 210, 90]],
    dtype=np.uint8,
)
BACKGROUND_PALETTE = np.array(
    [[30, 60, 90], [60, 90, 30], [20, 20, 80], [80, 40, 90], [40, 80, 80]],
    dtype=np.uint8,
)


def blocky(rng, h, w, block, palette):
    by = -(-h // block)
    bx = -(-w // block)
    picks = palette[rng.integers(len(palette), size=(by, bx))]
    return np.repeat(np.repeat(picks, block, axis=0), block, axis=1)[:h, :w]


def make_scene(seed=0, size=(160, 220), obj=(60, 80), origin=(40, 50), shape="rect",
               background="noise", block=10):
    """Static test scene: textured object over textured background.

    Returns (frame, box, object_mask) where object_mask is the exact
    painted-object raster aligned to the box's integer window.
    """
    rng = np.random.default_rng(seed)
    h, w = size
    oh, ow = obj
    x0, y0 = origin
    if background == "noise":
        frame = rng.integers(10, 100, size=(h, w, 3)).astype(np.uint8)
    else:
        frame = blocky(rng, h, w, 16, BACKGROUND_PALETTE)
    tex = blocky(rng, oh, ow, block, OBJECT_PALETTE)
    if shape == "ellipse":
        yy, xx = np.mgrid[0:oh, 0:ow]
        mask = ((xx + 0.5) / ow - 0.5) ** 2 / 0.25 + ((yy + 0.5) / oh - 0.5) ** 2 / 0.25 <= 1.0
    else:
        mask = np.ones((oh, ow), dtype=bool)
    region = frame[y0 : y0 + oh, x0 : x0 + ow]
    region[mask] = tex[mask]
    return frame, Box(float(x0), float(y0), float(ow), float(oh)), mask


# --- acceptance criterion reporting --------------------------------------

_CRITERION_RESULTS: dict[str, str] = {}


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    _CRITERION_RESULTS[name] = ("PASS" if passed else "FAIL") + (
        f" ({detail})" if detail else ""
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reported = dict(_CRITERION_RESULTS)
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance" in name and "criterion" in name:
                short = name.split("::")[-1]
                if short not in reported:
                    reported[short] = "PASS" if key == "passed" else "FAIL"
    if not reported:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(reported):
        terminalreporter.write_line(f"{name}: {reported[name]}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
