"""Calibrating an imported target depth map to the material actually present."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..field import HeightField, edge_mask

log = logging.getLogger(__name__)

ALPHA_RANGE = (0.1, 3.0)
DEFAULT_GOAL_WEIGHTS = (1.0, 10.0, 0.1)


class GoalError(ValueError):
    pass


@dataclass(frozen=True)
class GoalSpec:
    raw_target: HeightField
    target: HeightField  # adjusted goal, edges copied from the current state
    alpha: float
    beta: float
    mask: np.ndarray
    weights: tuple[float, float, float] = DEFAULT_GOAL_WEIGHTS
    degenerate: bool = False
    objective: float = 0.0


class _Fit:
    """Vectorised adjust objective over the interior cells."""

    def __init__(self, t_in, s0, mask, d_max, weights):
        self.t = t_in
        self.d_max = d_max
        self.w0, self.w1, self.w2 = weights
        self.n = s0.size
        self.edge_sum = float(s0[mask].sum())
        self.s0_sum = float(s0.sum())
        self.t_sum = float(t_in.sum())

    def __call__(self, alpha, beta):
        alpha = np.asarray(alpha, dtype=np.float64)
        beta = np.asarray(beta, dtype=np.float64)
        norm = self.n * self.d_max
        total = self.edge_sum + alpha * self.t_sum + beta * self.t.size
        vol = np.abs(total - self.s0_sum) / norm
        vals = alpha[..., None] * self.t + beta[..., None]
        over = np.where(vals > self.d_max, vals, 0.0).sum(-1) / norm
        return self.w0 * vol + self.w1 * over - self.w2 * alpha


def _better(j, a, b, best):
    """Lower objective wins; exact ties go to the candidate nearer (1, 0)."""
    bj, ba, bb = best
    if j < bj - 1e-12:
        return True
    return abs(j - bj) <= 1e-12 and (a - 1) ** 2 + (b / 100) ** 2 < (ba - 1) ** 2 + (bb / 100) ** 2


def adjust_goal(
    target: HeightField,
    current: HeightField,
    weights: tuple[float, float, float] = DEFAULT_GOAL_WEIGHTS,
    mask: np.ndarray | None = None,
    edge_fraction: float = 0.1,
    grid: tuple[int, int] = (30, 41),
    tol: float = 1e-4,
) -> GoalSpec:
    """Fit (alpha, beta) so that alpha * target + beta matches the current material.

    The objective is w0 * |volume mismatch| + w1 * (depth mass beyond the table)
    - w2 * alpha, with the first two terms normalized by cells * d_max. A coarse
    grid over alpha in [0.1, 3] and beta in [-d_max, d_max] is followed by a
    compass search whose step halves down to ``tol``.
    """
    if target.shape != current.shape:
        raise GoalError(f"target {target.shape} and current {current.shape} differ in shape")
    m = edge_mask(current.shape, edge_fraction) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != current.shape:
        raise GoalError("mask shape does not match the fields")
    d_max = current.d_max
    s0 = current.depths
    t = target.depths
    inner = ~m
    a_lo, a_hi = ALPHA_RANGE
    b_lo, b_hi = -d_max, d_max

    degenerate = False
    if not inner.any():
        alpha, beta, j = 1.0, 0.0, 0.0
    elif np.ptp(t[inner]) < 1e-9:
        degenerate = True
        alpha = 1.0
        beta = float(np.clip(s0[inner].mean() - t[inner].mean(), b_lo, b_hi))
        fit = _Fit(t[inner], s0, m, d_max, weights)
        j = float(fit(alpha, beta))
        log.warning("flat target: alpha is unidentifiable, using alpha=1 and a volume-matching beta")
    else:
        fit = _Fit(t[inner], s0, m, d_max, weights)
        na, nb = grid
        alphas = np.unique(np.append(np.linspace(a_lo, a_hi, na), 1.0))
        betas = np.unique(np.append(np.linspace(b_lo, b_hi, nb), 0.0))
        A, B = np.meshgrid(alphas, betas, indexing="ij")
        J = fit(A, B)
        best = (np.inf, 1.0, 0.0)
        for idx in np.argsort(J, axis=None, kind="stable")[:8]:
            i, k = np.unravel_index(idx, J.shape)
            if _better(J[i, k], A[i, k], B[i, k], best):
                best = (float(J[i, k]), float(A[i, k]), float(B[i, k]))
        j, alpha, beta = best
        sa = (a_hi - a_lo) / (na - 1)
        sb = (b_hi - b_lo) / (nb - 1)
        while sa > tol * (a_hi - a_lo) or sb > tol * (b_hi - b_lo):
            moved = False
            for da, db in ((sa, 0), (-sa, 0), (0, sb), (0, -sb)):
                a = float(np.clip(alpha + da, a_lo, a_hi))
                b = float(np.clip(beta + db, b_lo, b_hi))
                ja = float(fit(a, b))
                if _better(ja, a, b, (j, alpha, beta)):
                    j, alpha, beta, moved = ja, a, b, True
            if not moved:
                sa, sb = sa / 2, sb / 2

    adjusted = np.where(m, s0, alpha * t + beta)
    adjusted = np.clip(adjusted, 0.0, d_max)
    adjusted[m] = s0[m]
    goal = current.with_depths(adjusted)
    return GoalSpec(target, goal, float(alpha), float(beta), m, tuple(weights), degenerate, float(j))


def adjust_objective(alpha, beta, target: HeightField, current: HeightField, weights=DEFAULT_GOAL_WEIGHTS, mask=None, edge_fraction=0.1):
    """The objective ``adjust_goal`` minimises, for external checks."""
    m = edge_mask(current.shape, edge_fraction) if mask is None else np.asarray(mask, dtype=bool)
    return float(_Fit(target.depths[~m], current.depths, m, current.d_max, weights)(alpha, beta))
