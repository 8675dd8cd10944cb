"""Centralized fusion node: collation, clustering, CI fusion, group tracking.

The command center is split like the testbed's broker/primary pair: the
broker collates asynchronous per-agent batches out of per-agent bounded
time queues, the primary clusters, fuses and group-tracks the collated
world-frame tracks, and the unified picture is redistributed to every
agent over its own channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bus import BoundedTimeQueue, Discovery, SimBus, StampedMessage
from .fusion import Cluster, CovarianceIntersectionFusion, FusedState, SampledAssignmentClusterer
from .geometry import WORLD, ObjectState
from .messages import CCTracks, StatusMsg, TrackBatch
from .scenario import Detection
from .tracking import MultiObjectTracker, Track, TrackerConfig, transform_track


@dataclass(frozen=True)
class CollationConfig:
    """Broker tuning: how long to wait for laggards and queue sizing."""

    latency_factor: float = 0.5
    queue_capacity: int = 32
    staleness_window: float = 0.5

    def __post_init__(self) -> None:
        if self.latency_factor < 0:
            raise ValueError("latency_factor must be >= 0")

    def to_jsonable(self) -> dict:
        return {
            "latency_factor": self.latency_factor,
            "queue_capacity": self.queue_capacity,
            "staleness_window": self.staleness_window,
        }


class Collator:
    """Per-agent bounded time queues plus the batch-popping rule.

    Each cycle the earliest viable timestamp t* is the minimum over live
    agents (with queued batches) of their newest queued timestamp, floored
    at now - latency_factor. Every agent then contributes the single batch
    closest to t* (ties to the newer side); strictly older batches are
    discarded, newer ones stay queued, and an agent whose closest batch is
    farther than latency_factor from t* contributes nothing this cycle.
    """

    def __init__(self, config: CollationConfig):
        self.config = config
        self.queues: dict[str, BoundedTimeQueue] = {}
        self.discovery = Discovery(config.staleness_window)

    def on_status(self, agent: str, timestamp: float) -> None:
        self.discovery.note(agent, timestamp)
        if agent not in self.queues:
            self.queues[agent] = BoundedTimeQueue(self.config.queue_capacity)

    def on_tracks(self, agent: str, batch: TrackBatch) -> None:
        queue = self.queues.get(agent)
        if queue is None:
            # batches arriving ahead of discovery are not buffered
            return
        queue.push(batch.timestamp, batch)

    def _retire_stale(self, now: float) -> None:
        live = self.discovery.live(now)
        for agent in list(self.queues):
            if agent not in live:
                del self.queues[agent]
                self.discovery.forget(agent)

    def collate(self, now: float) -> dict[str, list[Track]]:
        """Pop one batch per agent and return its tracks in the world frame."""
        self._retire_stale(now)
        newest = {
            agent: queue.newest_ts()
            for agent, queue in self.queues.items()
            if len(queue) > 0
        }
        if not newest:
            return {}
        t_star = max(min(newest.values()), now - self.config.latency_factor)
        window = self.config.latency_factor
        out: dict[str, list[Track]] = {}
        for agent in sorted(newest):
            queue = self.queues[agent]
            best: tuple[float, TrackBatch] | None = None
            while len(queue) > 0:
                ts = queue.peek_ts()
                if best is None or abs(ts - t_star) <= abs(best[0] - t_star):
                    best = queue.pop()
                else:
                    break
            if best is None:
                continue
            ts, batch = best
            if ts < t_star - window:
                continue  # too stale to use, already discarded
            if ts > t_star + window:
                queue.push(ts, batch)  # not viable yet, keep for later
                continue
            out[agent] = [transform_track(t, batch.pose) for t in batch.tracks]
        return out


class GroupTrackerWrapper:
    """Track fused cluster states so clusters get longitudinal identities.

    Fused estimates are converted to detection equivalents (position
    measurement, R from the fused position block) and fed to a dedicated
    tracker instance owned by the command center.
    """

    def __init__(self, fusion: CovarianceIntersectionFusion, tracker: TrackerConfig):
        self.fusion = fusion
        self.tracker_config = tracker
        self.tracker = MultiObjectTracker(tracker, owner="cc", frame=WORLD)

    def fuse_clusters(self, clusters: list[Cluster]) -> list[tuple[FusedState, Cluster]]:
        fused = []
        for cluster in clusters:
            members = [(m.mean, m.covariance) for _, m in cluster.members]
            contributors = tuple(a for a, _ in cluster.members)
            fused.append((self.fusion.fuse(members, contributors), cluster))
        return fused

    def update(self, clusters: list[Cluster], now: float) -> list[Track]:
        pseudo: list[Detection] = []
        for i, (state, cluster) in enumerate(self.fuse_clusters(clusters)):
            rep = cluster.members[0][1]  # deterministic representative
            centroid = ObjectState(
                position=state.mean[:3],
                velocity=np.zeros(3),
                extent=rep.extent,
                yaw=rep.yaw,
                frame=WORLD,
                timestamp=now,
            )
            pseudo.append(
                Detection(
                    centroid=centroid,
                    measurement_noise=state.covariance[:3, :3],
                    source_agent="cc",
                    timestamp=now,
                    det_id=f"cc:{now:.3f}:{i:03d}",
                )
            )
        return self.tracker.step(pseudo, now)


class CommandCenterPipeline:
    """Cluster, fuse, and group-track one cycle of collated tracks."""

    def __init__(self, clustering: SampledAssignmentClusterer, group_tracking: GroupTrackerWrapper):
        self.clustering = clustering
        self.group_tracking = group_tracking

    def process(self, tracks_by_agent: dict[str, list[Track]], now: float) -> list[Track]:
        clusters = self.clustering.cluster(tracks_by_agent)
        return self.group_tracking.update(clusters, now)


class CommandCenterNode:
    """Bus-facing command center: broker + primary on one event loop."""

    def __init__(
        self,
        bus: SimBus,
        pipeline: CommandCenterPipeline,
        collation: CollationConfig,
        node_id: str = "cc",
        debug: bool = False,
    ):
        self.bus = bus
        self.pipeline = pipeline
        self.collator = Collator(collation)
        self.node_id = node_id
        self.debug_log: list[dict] | None = [] if debug else None
        self.last_published: tuple[Track, ...] = ()

    def on_status(self, when: float, topic: str, msg: StampedMessage) -> None:
        status: StatusMsg = msg.payload
        self.collator.on_status(status.agent_id, msg.timestamp)

    def on_tracks(self, when: float, topic: str, msg: StampedMessage) -> None:
        batch: TrackBatch = msg.payload
        self.collator.on_tracks(batch.agent_id, batch)

    def on_cycle(self, when: float, topic: str, msg: StampedMessage) -> None:
        collated = self.collator.collate(when)
        cc_tracks = self.pipeline.process(collated, when)
        self.last_published = tuple(cc_tracks)
        if self.debug_log is not None:
            self.debug_log.append(
                {
                    "t": when,
                    "collated": {a: len(ts) for a, ts in sorted(collated.items())},
                    "published": len(cc_tracks),
                }
            )
        self.bus.publish(
            StampedMessage(
                topic="cc/tracks",
                source=self.node_id,
                timestamp=when,
                payload=CCTracks(tracks=tuple(cc_tracks), cycle_time=when),
            )
        )
