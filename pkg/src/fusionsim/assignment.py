"""Gated min-cost bipartite assignment shared by tracking, attacks, and scoring."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

# Gate sentinel must dominate any feasible total so the solver prefers
# matching every within-gate pair it can before paying a forbidden cost.
_FORBIDDEN = 1e12


def assignment_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances between rows of a (n,d) and b (m,d)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        return np.zeros((a.shape[0] if a.size else 0, b.shape[0] if b.size else 0))
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def gated_assignment(
    cost: np.ndarray, gate: float | None = None
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Solve min-cost assignment with an optional distance gate.

    Pairs whose cost exceeds ``gate`` are forbidden. Among pairings that
    respect the gate, the result matches as many pairs as possible and
    minimizes the total cost of the matched pairs. Returns
    (pairs, unmatched_rows, unmatched_cols) with pairs sorted by row index.
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n == 0 or m == 0:
        return [], list(range(n)), list(range(m))
    work = cost.copy()
    if gate is not None:
        work = np.where(cost <= gate, cost, _FORBIDDEN)
    rows, cols = linear_sum_assignment(work)
    pairs = [
        (int(i), int(j))
        for i, j in zip(rows, cols)
        if work[i, j] < _FORBIDDEN
    ]
    matched_rows = {i for i, _ in pairs}
    matched_cols = {j for _, j in pairs}
    unmatched_rows = [i for i in range(n) if i not in matched_rows]
    unmatched_cols = [j for j in range(m) if j not in matched_cols]
    return sorted(pairs), unmatched_rows, unmatched_cols


def assign_points(
    a: np.ndarray, b: np.ndarray, gate: float | None = None
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Gated assignment on point sets using Euclidean centroid distance."""
    return gated_assignment(assignment_cost_matrix(a, b), gate)
