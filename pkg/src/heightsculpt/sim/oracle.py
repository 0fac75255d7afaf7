"""Ground-truth deformation rules standing in for the physical material.

A push drags the tool tip along a straight line, following the local surface
and sinking linearly from a light touch to ``depth`` mm by the end of travel.
Material under the swept tool is removed (minus elastic rebound) and a
``plasticity`` share of it is piled into Gaussian ridges around the path.
Granular materials then slump until every slope is within the angle of repose.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

from ..actions import ActionBounds, ActionError, PinchAction, PushAction
from ..field import HeightField
from .materials import MaterialSpec, ToolProfile

STEP_CELLS = 0.5  # sweep sampling interval along the path, in cells
CRUMBLE_PER_MM = 0.04  # pinch crumble amplitude per mm of jaw travel
RIDGE_TRUNC = 4.0  # ridge tails cut at this many sigmas

DEFAULT_BOUNDS = ActionBounds()


def _cell_centres(shape, cs):
    h, w = shape
    return (np.arange(w) + 0.5) * cs, (np.arange(h) + 0.5) * cs


def _sweep(depths, cs, tool, start, direction, travel, depth, excav):
    """Deepest tool-bottom depth per cell over one linear stroke (in place on ``excav``)."""
    h, w = depths.shape
    xs, ys = _cell_centres(depths.shape, cs)
    n = 1 if travel <= 0 else int(math.ceil(travel / (STEP_CELLS * cs))) + 1
    dx, dy = direction
    reach = tool.reach
    for k in range(n):
        frac = 1.0 if n == 1 else k / (n - 1)
        px = start[0] + frac * travel * dx
        py = start[1] + frac * travel * dy
        j0 = max(int(math.floor((px - reach) / cs - 0.5)), 0)
        j1 = min(int(math.ceil((px + reach) / cs - 0.5)), w - 1)
        i0 = max(int(math.floor((py - reach) / cs - 0.5)), 0)
        i1 = min(int(math.ceil((py + reach) / cs - 0.5)), h - 1)
        if j0 > j1 or i0 > i1:
            continue
        rx = xs[j0 : j1 + 1][None, :] - px
        ry = ys[i0 : i1 + 1][:, None] - py
        u = rx * dx + ry * dy
        v = -rx * dy + ry * dx
        off, inside = tool.offsets(u, v)
        if not inside.any():
            continue
        win = depths[i0 : i1 + 1, j0 : j1 + 1]
        # tip rides on the highest material under the tool
        tip = win[inside].min() + frac * depth
        bottom = np.where(inside, tip - off, -np.inf)
        sub = excav[i0 : i1 + 1, j0 : j1 + 1]
        np.maximum(sub, bottom, out=sub)


def _segment_distance(shape, cs, p0, p1):
    xs, ys = _cell_centres(shape, cs)
    gx, gy = np.meshgrid(xs, ys)
    ax, ay = p0
    bx, by = p1
    ux, uy = bx - ax, by - ay
    seg2 = ux * ux + uy * uy
    if seg2 == 0:
        t = np.zeros_like(gx)
    else:
        t = np.clip(((gx - ax) * ux + (gy - ay) * uy) / seg2, 0.0, 1.0)
    return np.hypot(gx - (ax + t * ux), gy - (ay + t * uy))


def _press(depths, excav, d_max, rebound):
    cut = np.minimum(excav, d_max)
    pressed = np.maximum(depths, cut)
    return depths + (1.0 - rebound) * (pressed - depths)


def _deposit(depths, weights, volume, cs):
    total = weights.sum()
    if volume <= 0 or total <= 0:
        return depths
    return depths - volume * weights / total / cs**2


def relax_repose(depths: np.ndarray, cell_size: float, repose_tangent: float, max_iter: int = 100_000) -> np.ndarray:
    """Slump material downhill until no 4-neighbour slope exceeds ``repose_tangent``.

    Disjoint neighbour pairs (red/black along each axis) are levelled exactly to
    just under the limit, so volume is conserved and the loop terminates.
    """
    d = np.array(depths, dtype=np.float64, copy=True)
    lim = repose_tangent * cell_size
    target = lim * (1.0 - 1e-3)
    for _ in range(max_iter):
        for axis in (0, 1):
            n = d.shape[axis]
            for parity in (0, 1):
                if axis == 1:
                    a, b = d[:, parity : n - 1 : 2], d[:, parity + 1 : n : 2]
                else:
                    a, b = d[parity : n - 1 : 2, :], d[parity + 1 : n : 2, :]
                diff = b - a
                q = np.where(np.abs(diff) > lim, (np.abs(diff) - target) / 2.0, 0.0) * np.sign(diff)
                a += q
                b -= q
        steep = max(np.abs(np.diff(d, axis=0)).max(initial=0.0), np.abs(np.diff(d, axis=1)).max(initial=0.0))
        if steep <= lim:
            return d
    raise RuntimeError("repose relaxation did not converge")


def max_slope(depths: np.ndarray, cell_size: float) -> float:
    d = np.asarray(depths)
    return max(np.abs(np.diff(d, axis=0)).max(initial=0.0), np.abs(np.diff(d, axis=1)).max(initial=0.0)) / cell_size


def _finish(depths, state, material, rng):
    out = depths
    if material.noise_sigma > 0:
        out = out + rng.normal(0.0, material.noise_sigma, size=out.shape)
    out = np.clip(out, 0.0, state.d_max)
    if material.granular:
        out = relax_repose(out, state.cell_size, material.repose_tangent)
    return state.with_depths(out, clip=True)


def deform_push(state: HeightField, action: PushAction, material: MaterialSpec, tool: ToolProfile) -> np.ndarray:
    """Noise-free push result before granular relaxation."""
    cs = state.cell_size
    h, w = state.shape
    d = state.depths
    start = (action.x * w * cs, action.y * h * cs)
    direction = (math.cos(action.theta), math.sin(action.theta))
    excav = np.full(d.shape, -np.inf)
    _sweep(d, cs, tool, start, direction, action.length, action.depth, excav)
    pressed = _press(d, excav, state.d_max, material.elastic_rebound)
    displaced = float(np.sum(pressed - d)) * cs**2
    end = (start[0] + action.length * direction[0], start[1] + action.length * direction[1])
    dist = _segment_distance(d.shape, cs, start, end)
    gap = dist - tool.radius
    sig = material.ridge_sigma
    weights = np.where((gap >= 0) & (gap <= RIDGE_TRUNC * sig), np.exp(-0.5 * (gap / sig) ** 2), 0.0)
    out = _deposit(pressed, weights, material.plasticity * displaced, cs)
    return np.clip(out, 0.0, None)


def apply_push(
    state: HeightField,
    action: PushAction,
    material: MaterialSpec,
    tool: ToolProfile,
    seed: int,
    bounds: ActionBounds = DEFAULT_BOUNDS,
) -> HeightField:
    """Execute one push and return the next scan."""
    if not isinstance(action, PushAction):
        raise ActionError("apply_push needs a PushAction")
    if tool.mode != "single-tip":
        raise ActionError(f"tool {tool.name!r} is a gripper; use apply_pinch")
    action.validate(bounds)
    rng = np.random.default_rng(seed)
    return _finish(deform_push(state, action, material, tool), state, material, rng)


def deform_pinch(state, action, material, tool, rng) -> np.ndarray:
    cs = state.cell_size
    h, w = state.shape
    d = state.depths
    centre = np.array([action.x * w * cs, action.y * h * cs])
    axis = np.array([math.cos(action.theta), math.sin(action.theta)])
    half_open = tool.opening / 2.0
    excav = np.full(d.shape, -np.inf)
    for side in (1.0, -1.0):
        start = centre + side * half_open * axis
        _sweep(d, cs, tool, tuple(start), tuple(-side * axis), action.close_dist / 2.0, action.depth, excav)
    pressed = _press(d, excav, state.d_max, material.elastic_rebound)
    displaced = float(np.sum(pressed - d)) * cs**2

    xs, ys = _cell_centres(d.shape, cs)
    gx, gy = np.meshgrid(xs, ys)
    rx, ry = gx - centre[0], gy - centre[1]
    u = rx * axis[0] + ry * axis[1]
    v = -rx * axis[1] + ry * axis[0]
    gap = tool.opening - action.close_dist
    sig = material.ridge_sigma
    sig_u = max(sig, gap / 4.0)
    # squeezed material piles between the jaws, with a random slip along the axis
    slip = rng.normal(0.0, 0.05 * action.close_dist) if action.close_dist > 0 else 0.0
    lateral = np.clip(np.abs(v) - tool.radius, 0.0, None)
    weights = np.exp(-0.5 * ((u - slip) / sig_u) ** 2 - 0.5 * (lateral / sig) ** 2)
    weights[(np.abs(u - slip) > 3 * sig_u) | (lateral > RIDGE_TRUNC * sig)] = 0.0
    out = _deposit(pressed, weights, material.plasticity * displaced, cs)

    amp = CRUMBLE_PER_MM * action.close_dist
    if amp > 0:
        lumps = gaussian_filter(rng.normal(size=d.shape), sigma=1.0, mode="nearest")
        lumps /= lumps.std() + 1e-12
        region = (np.abs(u) <= half_open + tool.radius) & (lateral <= 2 * sig)
        out = out - amp * lumps * region
    return np.clip(out, 0.0, None)


def apply_pinch(
    state: HeightField,
    action: PinchAction,
    material: MaterialSpec,
    tool: ToolProfile,
    seed: int,
    bounds: ActionBounds = DEFAULT_BOUNDS,
) -> HeightField:
    """Close the gripper jaws on the surface and return the next scan."""
    if not isinstance(action, PinchAction):
        raise ActionError("apply_pinch needs a PinchAction")
    if tool.mode != "gripper-pair":
        raise ActionError(f"tool {tool.name!r} is single-tip; use apply_push")
    action.validate(bounds)
    if action.close_dist > tool.opening:
        raise ActionError(f"close_dist {action.close_dist} exceeds jaw opening {tool.opening}")
    rng = np.random.default_rng(seed)
    return _finish(deform_pinch(state, action, material, tool, rng), state, material, rng)


def apply_action(state, action, material, tool, seed, bounds=DEFAULT_BOUNDS) -> HeightField:
    if isinstance(action, PinchAction):
        return apply_pinch(state, action, material, tool, seed, bounds)
    return apply_push(state, action, material, tool, seed, bounds)


def scan(state: HeightField, material: MaterialSpec, seed: int) -> HeightField:
    """A fresh sensor capture of ``state``."""
    return _finish(np.asarray(state.depths), state, material, np.random.default_rng(seed))
