"""Cross-agent clustering and covariance-intersection track fusion.

Covariance intersection is the right fusion rule here because per-agent
tracks of the same object share unknown process correlations; the convex
combination of inverse covariances is consistent for any correlation.
The mixing weight minimizes the trace of the fused covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .tracking import Track

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class FusedState:
    """Fused estimate of one cluster."""

    mean: np.ndarray
    covariance: np.ndarray
    contributors: tuple[str, ...] = ()
    regularized: bool = False


@dataclass(eq=False)
class Cluster:
    """Cross-agent cluster: at most one member track per agent."""

    members: list[tuple[str, Track]]
    centroid: np.ndarray


def _golden_section_min(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def ci_weight(cov_a: np.ndarray, cov_b: np.ndarray, tol: float = 1e-6) -> float:
    """Mixing weight minimizing trace of the pairwise CI covariance.

    Uses simultaneous diagonalization so each candidate weight costs a
    handful of scalar operations instead of a matrix inverse: with
    A = cov_a^-1 = L M L^T relative to B = cov_b^-1 = L L^T,
    trace((wA + (1-w)B)^-1) = sum_i g_i / (w d_i + 1 - w).
    """
    inv_a = np.linalg.inv(cov_a)
    inv_b = np.linalg.inv(cov_b)
    L = np.linalg.cholesky(inv_b)
    Linv = np.linalg.inv(L)
    M = Linv @ inv_a @ Linv.T
    M = 0.5 * (M + M.T)
    d, U = np.linalg.eigh(M)
    K = Linv @ Linv.T
    g = [float(v) for v in np.diag(U.T @ K @ U)]
    eig = [max(float(v), 0.0) for v in d]

    def trace_at(w: float) -> float:
        total = 0.0
        for gi, di in zip(g, eig):
            denom = w * di + (1.0 - w)
            if denom <= 1e-300:
                return float("inf")
            total += gi / denom
        return total

    w = _golden_section_min(trace_at, 0.0, 1.0, tol)
    candidates = [0.0, 1.0, w]
    values = [trace_at(c) for c in candidates]
    return candidates[int(np.argmin(values))]


def pairwise_ci(
    mean_a: np.ndarray,
    cov_a: np.ndarray,
    mean_b: np.ndarray,
    cov_b: np.ndarray,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Fuse two estimates; returns (mean, covariance, weight)."""
    w = ci_weight(cov_a, cov_b, tol)
    inv_a = np.linalg.inv(cov_a)
    inv_b = np.linalg.inv(cov_b)
    info = w * inv_a + (1.0 - w) * inv_b
    fused_cov = np.linalg.inv(info)
    fused_cov = 0.5 * (fused_cov + fused_cov.T)
    fused_mean = fused_cov @ (w * inv_a @ mean_a + (1.0 - w) * inv_b @ mean_b)
    return fused_mean, fused_cov, w


def fuse_ci(
    members: Sequence[tuple[np.ndarray, np.ndarray]],
    contributors: tuple[str, ...] = (),
    *,
    regularization: float = 1e-9,
) -> FusedState:
    """Fold covariance intersection left over the members in given order.

    A single member passes through unchanged. A singular member covariance
    is regularized by adding ``regularization`` * I and the result flagged.
    """
    if not members:
        raise ValueError("fuse_ci needs at least one member")
    dim = np.asarray(members[0][0]).shape[0]
    regularized = False
    prepared: list[tuple[np.ndarray, np.ndarray]] = []
    for mean, cov in members:
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if mean.shape[0] != dim or cov.shape != (dim, dim):
            raise ValueError("all members must share one state dimension")
        # cheap singularity probe: Cholesky of the symmetrized covariance
        sym = 0.5 * (cov + cov.T)
        try:
            np.linalg.cholesky(sym)
        except np.linalg.LinAlgError:
            sym = sym + regularization * np.eye(dim)
            regularized = True
        prepared.append((mean, sym))
    mean, cov = prepared[0]
    for other_mean, other_cov in prepared[1:]:
        mean, cov, _ = pairwise_ci(mean, cov, other_mean, other_cov)
    return FusedState(mean=mean, covariance=cov, contributors=contributors, regularized=regularized)


class CovarianceIntersectionFusion:
    """Registry-facing wrapper around :func:`fuse_ci`."""

    def __init__(self, regularization: float = 1e-9):
        self.regularization = regularization

    def fuse(self, members: Sequence[tuple[np.ndarray, np.ndarray]], contributors: tuple[str, ...] = ()) -> FusedState:
        return fuse_ci(members, contributors, regularization=self.regularization)


class SampledAssignmentClusterer:
    """Greedy order-deterministic radius clustering with per-agent exclusivity.

    Tracks are visited in (agent id, track id) order; each joins the first
    existing cluster whose centroid lies within ``assign_radius`` and which
    has no member from the same agent, else it seeds a new cluster. The
    centroid is the running mean of member positions.
    """

    def __init__(self, assign_radius: float = 2.0):
        if assign_radius <= 0:
            raise ValueError("assign_radius must be > 0")
        self.assign_radius = assign_radius

    def cluster(self, tracks_by_agent: Mapping[str, Sequence[Track]]) -> list[Cluster]:
        clusters: list[Cluster] = []
        for agent in sorted(tracks_by_agent):
            for track in sorted(tracks_by_agent[agent], key=lambda t: t.id):
                placed = False
                for cluster in clusters:
                    if any(a == agent for a, _ in cluster.members):
                        continue
                    if np.linalg.norm(track.position - cluster.centroid) <= self.assign_radius:
                        cluster.members.append((agent, track))
                        positions = np.array([m.position for _, m in cluster.members])
                        cluster.centroid = positions.mean(axis=0)
                        placed = True
                        break
                if not placed:
                    clusters.append(
                        Cluster(members=[(agent, track)], centroid=track.position.copy())
                    )
        return clusters
