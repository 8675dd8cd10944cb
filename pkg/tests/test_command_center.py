import numpy as np

from fusionsim.command_center import (
    CollationConfig,
    Collator,
    CommandCenterPipeline,
    GroupTrackerWrapper,
)
from fusionsim.fusion import CovarianceIntersectionFusion, SampledAssignmentClusterer
from fusionsim.geometry import WORLD, Pose
from fusionsim.messages import TrackBatch
from fusionsim.tracking import Track, TrackerConfig


def make_track(track_id, x, y, owner):
    return Track(
        id=track_id,
        mean=np.array([x, y, 0.0, 0.0, 0.0, 0.0]),
        covariance=np.eye(6) * 0.25,
        extent=np.array([4.5, 1.8, 1.5]),
        yaw=0.0,
        hits=5,
        misses_in_a_row=0,
        confirmed=True,
        last_update=0.0,
        owner=owner,
        frame=f"agent:{owner}",
    )


def batch(agent, ts, tracks=()):
    pose = Pose(position=[0.0, 0.0, 0.0], frame=WORLD, timestamp=ts)
    return TrackBatch(agent_id=agent, pose=pose, tracks=tuple(tracks), timestamp=ts)


def fresh_collator(latency_factor=0.5):
    return Collator(CollationConfig(latency_factor=latency_factor, staleness_window=10.0))


def test_collate_empty_queues():
    collator = fresh_collator()
    collator.on_status("a", 0.0)
    assert collator.collate(1.0) == {}


def test_collate_two_agents_same_timestamp():
    collator = fresh_collator()
    for agent in ("a", "b"):
        collator.on_status(agent, 0.9)
        collator.on_tracks(agent, batch(agent, 1.0, [make_track(0, 1.0, 1.0, agent)]))
    out = collator.collate(1.0)
    assert sorted(out) == ["a", "b"]
    assert all(len(tracks) == 1 for tracks in out.values())


def test_collate_hand_traced_example():
    # A queues batches at 0.8/0.9/1.0, B queues 0.9; now=1.0, window=0.5:
    # t* = 0.9, A contributes 0.9 (0.8 discarded, 1.0 kept), B contributes 0.9
    collator = fresh_collator(latency_factor=0.5)
    collator.on_status("A", 0.9)
    collator.on_status("B", 0.9)
    for ts in (0.8, 0.9, 1.0):
        collator.on_tracks("A", batch("A", ts, [make_track(0, ts, 0.0, "A")]))
    collator.on_tracks("B", batch("B", 0.9, [make_track(0, 9.0, 0.0, "B")]))
    out = collator.collate(1.0)
    assert sorted(out) == ["A", "B"]
    assert np.isclose(out["A"][0].position[0], 0.9)
    assert np.isclose(out["B"][0].position[0], 9.0)
    # the newer A batch is still queued for the next cycle
    assert len(collator.queues["A"]) == 1
    assert collator.queues["A"].peek_ts() == 1.0


def test_collate_transforms_to_world():
    collator = fresh_collator()
    collator.on_status("a", 0.9)
    pose = Pose(position=[10.0, 0.0, 0.0], yaw=np.pi / 2, frame=WORLD, timestamp=1.0)
    b = TrackBatch(
        agent_id="a", pose=pose, tracks=(make_track(0, 1.0, 0.0, "a"),), timestamp=1.0
    )
    collator.on_tracks("a", b)
    out = collator.collate(1.0)
    assert np.allclose(out["a"][0].position, [10.0, 1.0, 0.0], atol=1e-12)
    assert out["a"][0].frame == WORLD


def test_collate_monotone_pop_timestamps():
    rng = np.random.default_rng(0)
    collator = fresh_collator(latency_factor=0.3)
    popped: dict[str, list[float]] = {"a": [], "b": []}
    t = 0.0
    for k in range(50):
        t = 0.1 * (k + 1)
        for agent in ("a", "b"):
            collator.on_status(agent, t)
            jitter = float(rng.uniform(0.0, 0.05))
            collator.on_tracks(agent, batch(agent, max(t - jitter, 0.0)))
        out = collator.collate(t)
        for agent in out:
            popped[agent].append(t)
    for agent, stamps in popped.items():
        assert stamps == sorted(stamps)


def test_out_of_order_arrival_collates_identically():
    stamps = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]

    def run(order):
        collator = fresh_collator()
        collator.on_status("a", 1.0)
        for ts in order:
            collator.on_tracks("a", batch("a", ts, [make_track(0, ts, 0.0, "a")]))
        return {a: [t.position[0] for t in ts] for a, ts in collator.collate(1.0).items()}

    in_order = run(stamps)
    shuffled = run([0.8, 0.5, 1.0, 0.7, 0.9, 0.6])
    assert in_order == shuffled


def test_stale_agent_queue_reset_on_readd():
    collator = Collator(CollationConfig(latency_factor=0.5, staleness_window=0.5))
    collator.on_status("a", 1.0)
    collator.on_tracks("a", batch("a", 1.0))
    collator.collate(2.0)  # agent went silent, retire its queue
    assert "a" not in collator.queues
    collator.on_status("a", 2.5)
    assert "a" in collator.queues
    assert len(collator.queues["a"]) == 0


def make_pipeline(confirm_hits=2):
    return CommandCenterPipeline(
        clustering=SampledAssignmentClusterer(assign_radius=2.0),
        group_tracking=GroupTrackerWrapper(
            fusion=CovarianceIntersectionFusion(),
            tracker=TrackerConfig(confirm_hits=confirm_hits, delete_misses=3),
        ),
    )


def test_group_track_empty_input():
    pipeline = make_pipeline()
    for k in range(5):
        assert pipeline.process({}, 0.1 * k) == []


def test_group_track_confirms_persistent_state():
    pipeline = make_pipeline(confirm_hits=2)
    published = []
    for k in range(6):
        tracks = {"a": [make_track(0, 5.0, 5.0, "a")], "b": [make_track(0, 5.2, 5.0, "b")]}
        published.append(pipeline.process(tracks, 0.1 * k))
    assert published[0] == []
    assert len(published[1]) == 1  # confirmed on the second cycle
    assert np.allclose(published[-1][0].position[:2], [5.1, 5.0], atol=0.2)


def test_group_track_stable_ids_two_objects():
    pipeline = make_pipeline()
    id_history = []
    for k in range(100):
        tracks = {
            "a": [make_track(0, -20.0, 0.0, "a"), make_track(1, 20.0, 0.0, "a")],
        }
        published = pipeline.process(tracks, 0.1 * k)
        id_history.append(tuple(sorted(t.id for t in published)))
    assert len(published) == 2
    steady = {ids for ids in id_history[5:]}
    assert len(steady) == 1  # identities never churn


def test_fused_cluster_uses_ci():
    pipeline = make_pipeline(confirm_hits=1)
    a = make_track(0, 0.0, 0.0, "a")
    b = make_track(0, 1.0, 0.0, "b")
    fused = pipeline.group_tracking.fuse_clusters(
        pipeline.clustering.cluster({"a": [a], "b": [b]})
    )
    assert len(fused) == 1
    state, cluster = fused[0]
    assert set(state.contributors) == {"a", "b"}
    # equal covariances: any weight gives the same fused covariance
    assert np.allclose(state.covariance, a.covariance, atol=1e-9)
    assert 0.0 <= state.mean[0] <= 1.0
