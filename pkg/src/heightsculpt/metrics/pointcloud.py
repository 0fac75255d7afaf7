"""Chamfer and Earth-Mover's distances between 3D point sets."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

EXACT_LIMIT = 256
MAX_POINTS = 1024


class MetricError(ValueError):
    pass


def _points(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise MetricError(f"expected an (n, 3) point array, got shape {p.shape}")
    if len(p) == 0:
        raise MetricError("point set is empty")
    return p


def chamfer(a, b) -> float:
    """Mean nearest-neighbour distance a->b plus b->a."""
    a, b = _points(a), _points(b)
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(da.mean() + db.mean())


def pad_to_match(a: np.ndarray, b: np.ndarray, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Grow the smaller set by resampling its own points (seeded, without bias to order)."""
    if len(a) == len(b):
        return a, b
    rng = np.random.default_rng(seed)
    small, big = (a, b) if len(a) < len(b) else (b, a)
    extra = small[rng.integers(0, len(small), len(big) - len(small))]
    grown = np.concatenate([small, extra])
    return (grown, big) if len(a) < len(b) else (big, grown)


def _greedy_match(cost: np.ndarray) -> np.ndarray:
    """Repeatedly pair the globally closest unmatched points."""
    n = cost.shape[0]
    order = np.argsort(cost, axis=None, kind="stable")
    perm = np.full(n, -1)
    used = np.zeros(n, dtype=bool)
    left = n
    for idx in order:
        i, j = divmod(int(idx), n)
        if perm[i] < 0 and not used[j]:
            perm[i] = j
            used[j] = True
            left -= 1
            if left == 0:
                break
    return perm


def _two_opt(cost: np.ndarray, perm: np.ndarray, max_rounds: int = 50) -> np.ndarray:
    """Swap partners of pairs while any swap lowers the total cost."""
    n = len(perm)
    rows = np.arange(n)
    for _ in range(max_rounds):
        cur = cost[rows, perm]
        improved = False
        for i in range(n):
            # gain of swapping partners between i and every k
            delta = cost[i, perm] + cost[rows, perm[i]] - cur[i] - cur
            k = int(np.argmin(delta))
            if delta[k] < -1e-12:
                perm[i], perm[k] = perm[k], perm[i]
                cur[i], cur[k] = cost[i, perm[i]], cost[k, perm[k]]
                improved = True
        if not improved:
            break
    return perm


def emd_details(a, b, seed: int = 0, exact_limit: int = EXACT_LIMIT, force: str | None = None) -> tuple[float, bool]:
    """(mean matched distance, approximate?) under a min-cost perfect matching.

    Sets of unequal size are padded by seeded resampling. Up to ``exact_limit``
    points the matching is exact (Hungarian); above it a greedy matching is
    improved by pairwise swaps. ``force`` may be "exact" or "greedy".
    """
    a, b = _points(a), _points(b)
    a, b = pad_to_match(a, b, seed)
    if len(a) > MAX_POINTS:
        raise MetricError(f"emd supports at most {MAX_POINTS} points, got {len(a)}")
    cost = cdist(a, b)
    approx = force == "greedy" or (force is None and len(a) > exact_limit)
    if approx:
        perm = _two_opt(cost, _greedy_match(cost))
    else:
        rows, perm = linear_sum_assignment(cost)
    return float(cost[np.arange(len(a)), perm].mean()), approx


def emd(a, b, seed: int = 0, **kw) -> float:
    return emd_details(a, b, seed, **kw)[0]
