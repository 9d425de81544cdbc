"""Fixed 256-entry colormap tables for the image renderers.

The tables are built once at import from hard-coded anchor triplets with
integer-exact interpolation arithmetic, so identical bytes come out on every
platform and run.
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class Colormap(Enum):
    VIRIDIS = "viridis"
    GRAY_INVERTED = "gray_inverted"
    LINE_BW = "line_bw"


# perceptual dark-purple -> teal -> yellow ramp, anchored every 0.1
_VIRIDIS_ANCHORS = np.array([
    (68, 1, 84),
    (72, 36, 117),
    (65, 68, 135),
    (53, 95, 141),
    (42, 120, 142),
    (33, 145, 140),
    (34, 168, 132),
    (68, 190, 112),
    (122, 209, 81),
    (189, 223, 38),
    (253, 231, 37),
], dtype=np.float64)


def _build_viridis() -> np.ndarray:
    pos = np.linspace(0.0, 1.0, len(_VIRIDIS_ANCHORS))
    grid = np.arange(256) / 255.0
    table = np.empty((256, 3), dtype=np.uint8)
    for c in range(3):
        table[:, c] = np.rint(np.interp(grid, pos, _VIRIDIS_ANCHORS[:, c])).astype(np.uint8)
    return table


def _build_gray_inverted() -> np.ndarray:
    ramp = np.arange(255, -1, -1, dtype=np.uint8)
    return np.stack([ramp, ramp, ramp], axis=1)


_TABLES = {
    Colormap.VIRIDIS: _build_viridis(),
    Colormap.GRAY_INVERTED: _build_gray_inverted(),
}
for _t in _TABLES.values():
    _t.setflags(write=False)


def lookup_table(cmap: Colormap) -> np.ndarray:
    """(256, 3) uint8, read-only. LINE_BW has no table; it is a stroke style."""
    t = _TABLES.get(cmap)
    if t is None:
        raise ValueError(f"colormap {cmap.value!r} has no lookup table")
    return t
