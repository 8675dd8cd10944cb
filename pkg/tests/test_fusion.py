import numpy as np
import pytest

from fusionsim.fusion import (
    Cluster,
    SampledAssignmentClusterer,
    ci_weight,
    fuse_ci,
    pairwise_ci,
)
from fusionsim.tracking import Track


def random_spd(rng, dim):
    A = rng.uniform(-1.0, 1.0, (dim, dim))
    return A @ A.T + 0.1 * np.eye(dim)


def grid_search_weight(cov_a, cov_b, step=1e-4):
    """Independent trace-minimizer oracle over a dense weight grid."""
    inv_a, inv_b = np.linalg.inv(cov_a), np.linalg.inv(cov_b)
    best_w, best_tr = 0.0, np.inf
    for w in np.arange(0.0, 1.0 + step / 2, step):
        P = np.linalg.inv(w * inv_a + (1.0 - w) * inv_b)
        tr = np.trace(P)
        if tr < best_tr:
            best_w, best_tr = w, tr
    return best_w, best_tr


def make_track(track_id, x, y, owner="a"):
    return Track(
        id=track_id,
        mean=np.array([x, y, 0.0, 0.0, 0.0, 0.0]),
        covariance=np.eye(6),
        extent=np.array([4.5, 1.8, 1.5]),
        yaw=0.0,
        hits=3,
        misses_in_a_row=0,
        confirmed=True,
        last_update=0.0,
        owner=owner,
        frame="world",
    )


def test_identical_members_pass_through_exactly():
    rng = np.random.default_rng(0)
    x = rng.uniform(-5, 5, 4)
    P = random_spd(rng, 4)
    fused = fuse_ci([(x, P), (x, P), (x, P)])
    assert np.allclose(fused.mean, x, atol=1e-9)
    assert np.allclose(fused.covariance, P, atol=1e-9)


def test_single_member_identity():
    rng = np.random.default_rng(1)
    x = rng.uniform(-5, 5, 6)
    P = random_spd(rng, 6)
    fused = fuse_ci([(x, P)], contributors=("a",))
    assert np.array_equal(fused.mean, x)
    assert fused.contributors == ("a",)


def test_two_member_weight_matches_grid_oracle():
    P1 = np.diag([1.0, 4.0])
    P2 = np.diag([4.0, 1.0])
    w = ci_weight(P1, P2)
    w_grid, _ = grid_search_weight(P1, P2)
    assert abs(w - w_grid) <= 1e-3


def test_random_pairs_match_grid_oracle():
    rng = np.random.default_rng(23)
    for dim in (2, 6):
        for _ in range(20):
            P1, P2 = random_spd(rng, dim), random_spd(rng, dim)
            w = ci_weight(P1, P2)
            w_grid, tr_grid = grid_search_weight(P1, P2)
            assert abs(w - w_grid) <= 1e-3
            _, fused_cov, _ = pairwise_ci(np.zeros(dim), P1, np.zeros(dim), P2)
            eigvals = np.linalg.eigvalsh(fused_cov)
            assert eigvals.min() > -1e-12
            assert np.trace(fused_cov) <= tr_grid + 1e-6


def test_fused_trace_never_beats_grid_minimum():
    # consistency: the chosen weight's trace is the grid optimum within tolerance
    rng = np.random.default_rng(5)
    P1, P2 = random_spd(rng, 3), random_spd(rng, 3)
    x1, x2 = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
    _, cov, w = pairwise_ci(x1, P1, x2, P2)
    w_grid, tr_grid = grid_search_weight(P1, P2)
    assert np.trace(cov) <= tr_grid + 1e-6


def test_singular_member_is_regularized_and_flagged():
    x = np.zeros(2)
    P_ok = np.eye(2)
    P_sing = np.array([[1.0, 0.0], [0.0, 0.0]])
    fused = fuse_ci([(x, P_ok), (x, P_sing)])
    assert fused.regularized
    assert np.all(np.isfinite(fused.covariance))


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        fuse_ci([(np.zeros(2), np.eye(2)), (np.zeros(3), np.eye(3))])
    with pytest.raises(ValueError):
        fuse_ci([])


# ------------------------------------------------------------- clustering


def test_single_track_single_cluster():
    clusterer = SampledAssignmentClusterer(assign_radius=2.0)
    clusters = clusterer.cluster({"a": [make_track(0, 0.0, 0.0)]})
    assert len(clusters) == 1
    assert clusters[0].members[0][0] == "a"


def test_cross_agent_tracks_merge():
    clusterer = SampledAssignmentClusterer(assign_radius=2.0)
    clusters = clusterer.cluster(
        {"a": [make_track(0, 0.0, 0.0, "a")], "b": [make_track(0, 0.5, 0.0, "b")]}
    )
    assert len(clusters) == 1
    assert sorted(agent for agent, _ in clusters[0].members) == ["a", "b"]
    assert np.allclose(clusters[0].centroid[:2], [0.25, 0.0])


def test_same_agent_tracks_never_merge():
    clusterer = SampledAssignmentClusterer(assign_radius=2.0)
    clusters = clusterer.cluster(
        {"a": [make_track(0, 0.0, 0.0, "a"), make_track(1, 0.5, 0.0, "a")]}
    )
    assert len(clusters) == 2

    # brute-force check: no valid partition of these two tracks into one
    # cluster exists under the one-member-per-agent rule
    def valid(partition):
        for group in partition:
            agents = [a for a, _ in group]
            if len(agents) != len(set(agents)):
                return False
            if len(group) > 1:
                centroid = np.mean([t.position for _, t in group], axis=0)
                if any(np.linalg.norm(t.position - centroid) > 2.0 for _, t in group):
                    return False
        return True

    items = [("a", make_track(0, 0.0, 0.0, "a")), ("a", make_track(1, 0.5, 0.0, "a"))]
    both_together = [items]
    assert not valid(both_together)
    assert valid([[items[0]], [items[1]]])


def test_every_track_in_exactly_one_cluster():
    rng = np.random.default_rng(3)
    clusterer = SampledAssignmentClusterer(assign_radius=2.0)
    tracks_by_agent = {
        f"agent{i}": [
            make_track(j, *rng.uniform(-20, 20, 2), owner=f"agent{i}") for j in range(6)
        ]
        for i in range(4)
    }
    clusters = clusterer.cluster(tracks_by_agent)
    seen = set()
    for cluster in clusters:
        for agent, track in cluster.members:
            key = (agent, track.id)
            assert key not in seen
            seen.add(key)
    total = sum(len(ts) for ts in tracks_by_agent.values())
    assert len(seen) == total


def test_clustering_deterministic():
    rng = np.random.default_rng(9)
    tracks_by_agent = {
        f"agent{i}": [make_track(j, *rng.uniform(-10, 10, 2), owner=f"agent{i}") for j in range(5)]
        for i in range(3)
    }
    clusterer = SampledAssignmentClusterer(assign_radius=2.0)
    first = clusterer.cluster(tracks_by_agent)
    second = clusterer.cluster(tracks_by_agent)
    assert [[m[0] for m in c.members] for c in first] == [
        [m[0] for m in c.members] for c in second
    ]
