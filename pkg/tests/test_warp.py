import math

import numpy as np
import pytest
import torch

from heightsculpt.actions import PinchAction, PushAction
from heightsculpt.field import HeightField, bilinear_tolerance
from heightsculpt.warp import (
    CanonicalPatch,
    anchor_for,
    canonical_values,
    from_canonical,
    to_canonical,
    warp_from_canonical,
    warp_to_canonical,
)

from conftest import smooth_field

CS = 2.0
SIZE = 48
P = 16


def _action_at_cell(row, col, theta=0.0, size=SIZE):
    return PushAction((col + 0.5) / size, (row + 0.5) / size, theta, 10.0, 2.0)


def _canonical_coords(action, size, p, cs):
    """Fractional (row, col) patch coordinates of every field cell centre."""
    ar, ac = anchor_for(action.kind, p)
    ys, xs = np.mgrid[0:size, 0:size]
    rx = (xs + 0.5) * cs - action.x * size * cs
    ry = (ys + 0.5) * cs - action.y * size * cs
    c, s = math.cos(action.theta), math.sin(action.theta)
    return ar + (-rx * s + ry * c) / cs, ac + (rx * c + ry * s) / cs


def _interior(action, size=SIZE, p=P, margin=1.0):
    pr, pc = _canonical_coords(action, size, p, CS)
    return (pr >= margin) & (pr <= p - 1 - margin) & (pc >= margin) & (pc <= p - 1 - margin)


def test_anchors():
    assert anchor_for("push", 64) == (32, 16)
    assert anchor_for("pinch", 64) == (32, 32)


def test_identity_pose_is_axis_aligned_crop(rng):
    d = rng.uniform(10, 90, (SIZE, SIZE))
    f = HeightField(d, CS, 100.0)
    r0, c0 = 20, 17
    patch = to_canonical(f, _action_at_cell(r0, c0), P)
    ar, ac = anchor_for("push", P)
    np.testing.assert_allclose(patch.values, d[r0 - ar : r0 - ar + P, c0 - ac : c0 - ac + P], atol=1e-10)


def test_constant_field_constant_patch():
    f = HeightField(np.full((SIZE, SIZE), 42.0), CS, 100.0)
    for theta in (0.0, 0.7, 3.0, 5.5):
        patch = to_canonical(f, PushAction(0.37, 0.61, theta, 5.0, 1.0), P)
        np.testing.assert_allclose(patch.values, 42.0, atol=1e-12)


def test_zero_patch_gives_zero_delta():
    out = from_canonical(np.zeros((P, P)), PushAction(0.4, 0.5, 1.0, 5.0, 1.0), (SIZE, SIZE), CS)
    assert out.shape == (SIZE, SIZE) and not out.any()


@pytest.mark.parametrize("theta", [math.pi, 0.3, 2.2, 4.9])
def test_round_trip_within_bilinear_tolerance(theta):
    f = smooth_field(np.random.default_rng(5), SIZE, amp=6.0, cs=CS)
    a = PushAction(0.5, 0.5, theta, 10.0, 2.0)
    patch = to_canonical(f, a, P)
    back = from_canonical(patch, a, f.shape, CS)
    m = _interior(a)
    assert m.sum() > 50
    resid = np.abs(back - f.depths)[m].max()
    assert resid <= 2 * bilinear_tolerance(f.depths) + 1e-9


def test_smooth_bump_round_trip():
    yy, xx = np.mgrid[0:P, 0:P]
    bump = 3.0 * np.exp(-((yy - 7.5) ** 2 + (xx - 7.5) ** 2) / 18.0)
    a = PushAction(0.47, 0.52, 0.8, 10.0, 2.0)
    field_delta = from_canonical(bump, a, (SIZE, SIZE), CS)
    again = canonical_values(field_delta, CS, a, P)
    inner = np.zeros((P, P), dtype=bool)
    inner[2:-2, 2:-2] = True
    resid = np.abs(again - bump)[inner].max()
    assert resid <= 2 * bilinear_tolerance(bump) + 1e-9


def test_point_mass_lands_at_field_midpoint():
    patch = np.zeros((P, P))
    ar, ac = anchor_for("push", P)
    patch[ar, ac] = 1.0
    out = from_canonical(patch, PushAction(0.5, 0.5, math.pi / 2, 10.0, 2.0), (SIZE, SIZE), CS)
    assert out.sum() > 0
    ys, xs = np.nonzero(out)
    w = out[ys, xs]
    centre = (SIZE / 2 - 0.5, SIZE / 2 - 0.5)
    assert abs(np.average(ys, weights=w) - centre[0]) <= 1.0
    assert abs(np.average(xs, weights=w) - centre[1]) <= 1.0


def test_pinch_anchor_centres_patch(rng):
    d = rng.uniform(10, 90, (SIZE, SIZE))
    f = HeightField(d, CS, 100.0)
    a = PinchAction((24 + 0.5) / SIZE, (24 + 0.5) / SIZE, 0.0, 10.0, 2.0)
    patch = to_canonical(f, a, P)
    assert patch.anchor == (8, 8)
    np.testing.assert_allclose(patch.values, d[16:32, 16:32], atol=1e-10)


def test_from_canonical_is_linear(rng):
    p1, p2 = rng.normal(size=(2, P, P))
    a = PushAction(0.41, 0.55, 1.3, 10.0, 2.0)
    lhs = from_canonical(2.5 * p1 - 0.75 * p2, a, (SIZE, SIZE), CS)
    rhs = 2.5 * from_canonical(p1, a, (SIZE, SIZE), CS) - 0.75 * from_canonical(p2, a, (SIZE, SIZE), CS)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_to_canonical_jacobian_matches_bilinear_weights():
    size, p = 12, 6
    rng = np.random.default_rng(3)
    d = torch.tensor(rng.uniform(10, 90, (1, size, size)), requires_grad=True)
    pose = torch.tensor([[0.52, 0.47, 0.9]], dtype=torch.float64)
    out = warp_to_canonical(d, pose, CS, p, (3, 3))
    jac = torch.zeros(p * p, size * size, dtype=torch.float64)
    for k in range(p * p):
        (g,) = torch.autograd.grad(out.reshape(-1)[k], d, retain_graph=True)
        jac[k] = g.reshape(-1)
    # analytic bilinear weights of each sample position
    c, s = math.cos(0.9), math.sin(0.9)
    px, py = 0.52 * size * CS, 0.47 * size * CS
    want = np.zeros((p * p, size * size))
    for r in range(p):
        for q in range(p):
            u, v = (q - 3) * CS, (r - 3) * CS
            col = (px + u * c - v * s) / CS - 0.5
            row = (py + u * s + v * c) / CS - 0.5
            c0, r0 = int(math.floor(col)), int(math.floor(row))
            fc, fr = col - c0, row - r0
            for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc), (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
                want[r * p + q, (r0 + dr) * size + (c0 + dc)] += wgt
    np.testing.assert_allclose(jac.numpy(), want, rtol=1e-5, atol=1e-9)


def test_batched_warps_match_single():
    rng = np.random.default_rng(8)
    d = torch.tensor(rng.uniform(10, 90, (3, SIZE, SIZE)))
    pose = torch.tensor([[0.3, 0.4, 0.1], [0.5, 0.5, 2.0], [0.7, 0.6, 4.0]], dtype=torch.float64)
    batch = warp_to_canonical(d, pose, CS, P)
    for i in range(3):
        one = warp_to_canonical(d[i : i + 1], pose[i : i + 1], CS, P)
        torch.testing.assert_close(batch[i], one[0])
    placed = warp_from_canonical(batch, pose, (SIZE, SIZE), CS)
    assert placed.shape == (3, SIZE, SIZE)


def test_canonical_patch_type():
    cp = CanonicalPatch(np.zeros((8, 8)), "pinch")
    assert cp.side == 8 and cp.anchor == (4, 4)
