"""Synthetic sculpting goals (letter glyphs, ridges) and action placement audits."""

from __future__ import annotations

import math

import numpy as np

from ..actions import Action, PinchAction
from ..field import DEFAULT_SURFACE, HeightField, flat_field

# stroke endpoints in unit coordinates of the glyph box
GLYPHS = {
    "X": [((0.0, 0.0), (1.0, 1.0)), ((0.0, 1.0), (1.0, 0.0))],
    "I": [((0.5, 0.0), (0.5, 1.0))],
    "L": [((0.0, 0.0), (0.0, 1.0)), ((0.0, 1.0), (1.0, 1.0))],
    "T": [((0.0, 0.0), (1.0, 0.0)), ((0.5, 0.0), (0.5, 1.0))],
    "V": [((0.0, 0.0), (0.5, 1.0)), ((0.5, 1.0), (1.0, 0.0))],
}


def segment_distance(shape, cell_size, p0, p1) -> np.ndarray:
    """Distance (mm) from every cell centre to the segment p0-p1 (mm coordinates)."""
    h, w = shape
    xs = (np.arange(w) + 0.5) * cell_size
    ys = (np.arange(h) + 0.5) * cell_size
    gx, gy = np.meshgrid(xs, ys)
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = x1 - x0, y1 - y0
    ll = dx * dx + dy * dy
    t = np.zeros_like(gx) if ll == 0 else np.clip(((gx - x0) * dx + (gy - y0) * dy) / ll, 0.0, 1.0)
    return np.hypot(gx - (x0 + t * dx), gy - (y0 + t * dy))


def _strokes_field(base: HeightField, strokes, amplitude, half_width):
    """Raised-cosine profile of ``amplitude`` mm along the strokes (positive = deeper)."""
    d = np.full(base.shape, np.inf)
    for p0, p1 in strokes:
        d = np.minimum(d, segment_distance(base.shape, base.cell_size, p0, p1))
    prof = np.where(d < half_width, 0.5 * (1 + np.cos(np.pi * d / half_width)), 0.0)
    return amplitude * prof


def glyph_goal(
    letter: str = "X",
    size: int = 128,
    surface: float = DEFAULT_SURFACE,
    groove_mm: float = 3.0,
    stroke_mm: float = 16.0,
    box: tuple[float, float] = (0.3, 0.7),
) -> HeightField:
    """A flat slab with ``letter`` engraved ``groove_mm`` deep inside ``box``."""
    if letter.upper() not in GLYPHS:
        raise KeyError(f"no glyph for {letter!r}; have {sorted(GLYPHS)}")
    base = flat_field(size, surface)
    ext = base.width * base.cell_size
    lo, hi = box[0] * ext, box[1] * ext
    strokes = [
        ((lo + a[0] * (hi - lo), lo + a[1] * (hi - lo)), (lo + b[0] * (hi - lo), lo + b[1] * (hi - lo)))
        for a, b in GLYPHS[letter.upper()]
    ]
    return base.with_depths(base.depths + _strokes_field(base, strokes, groove_mm, stroke_mm / 2))


def ridge_field(
    size: int = 128,
    surface: float = DEFAULT_SURFACE,
    height_mm: float = 4.0,
    width_mm: float = 6.0,
    span: tuple[float, float] = (0.3, 0.7),
    row: float = 0.5,
) -> HeightField:
    """A flat slab with a thin horizontal raised line."""
    base = flat_field(size, surface)
    ext = base.width * base.cell_size
    stroke = ((span[0] * ext, row * ext), (span[1] * ext, row * ext))
    return base.with_depths(base.depths - _strokes_field(base, [stroke], height_mm, width_mm / 2))


def feature_mask(field: HeightField, reference: float | None = None, threshold: float = 0.5) -> np.ndarray:
    """Cells deviating more than ``threshold`` mm from the (median) reference level."""
    ref = float(np.median(field.depths)) if reference is None else reference
    return np.abs(field.depths - ref) > threshold


def action_footprint(action: Action, shape, cell_size, radius: float, opening: float = 40.0) -> np.ndarray:
    """Cells swept by the tool during ``action``."""
    h, w = shape
    x0, y0 = action.x * w * cell_size, action.y * h * cell_size
    c, s = math.cos(action.theta), math.sin(action.theta)
    if isinstance(action, PinchAction):
        half = opening / 2
        p0, p1 = (x0 - half * c, y0 - half * s), (x0 + half * c, y0 + half * s)
    else:
        p0, p1 = (x0, y0), (x0 + action.length * c, y0 + action.length * s)
    return segment_distance(shape, cell_size, p0, p1) <= radius


def touches(action: Action, mask: np.ndarray, cell_size: float, radius: float, opening: float = 40.0) -> bool:
    return bool((action_footprint(action, mask.shape, cell_size, radius, opening) & mask).any())


def fraction_touching(actions, mask, cell_size, radius, opening: float = 40.0, min_depth: float = 0.0) -> float:
    """Share of ``actions`` whose swept footprint overlaps ``mask``.

    Actions shallower than ``min_depth`` never reach the material and count as
    not touching.
    """
    if not actions:
        return 0.0
    hits = [a.depth >= min_depth and touches(a, mask, cell_size, radius, opening) for a in actions]
    return float(np.mean(hits))


def add_mound(field: HeightField, centre=(0.5, 0.75), height_mm: float = 3.0, sigma_mm: float = 25.0) -> HeightField:
    """Raise a broad Gaussian mound (less depth) centred at unit coordinates ``centre``."""
    h, w = field.shape
    cs = field.cell_size
    gx, gy = np.meshgrid((np.arange(w) + 0.5) * cs, (np.arange(h) + 0.5) * cs)
    cx, cy = centre[0] * w * cs, centre[1] * h * cs
    bump = height_mm * np.exp(-0.5 * ((gx - cx) ** 2 + (gy - cy) ** 2) / sigma_mm**2)
    return field.with_depths(np.clip(field.depths - bump, 0.0, field.d_max))


def ridge_task(size: int = 128, surface: float = DEFAULT_SURFACE, mound_mm: float = 3.0):
    """(start, flat goal, ridge mask) for the ridge-flattening study.

    The start holds a thin raised line (steep, little volume) and a broad low
    mound (gentle, much volume), so height error and slope error point the
    planner at different regions.
    """
    ridge = ridge_field(size, surface)
    mask = feature_mask(ridge, reference=surface)
    start = add_mound(ridge, height_mm=mound_mm) if mound_mm > 0 else ridge
    goal = flat_field(size, surface, ridge.cell_size, ridge.d_max)
    return start, goal, mask
