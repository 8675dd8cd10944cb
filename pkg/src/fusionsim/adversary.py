"""Attack nodes interposed on agent topics.

Uncoordinated adversaries each corrupt their host agent's detection stream
with locally chosen targets; coordinated adversaries forward uncompromised
host tracks to a coordinator node that issues one shared directive. Both
select false-positive counts from a Poisson draw and negate a fraction of
what the host currently sees, then keep the same targets alive across
frames (a spoofed object must be longitudinally self-consistent or no
tracker will ever confirm it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import assign_points
from .bus import SimBus, StampedMessage
from .fusion import SampledAssignmentClusterer
from .geometry import WORLD, ObjectState, Pose, ground_pose, state_to_local, state_to_parent
from .messages import AdversaryReport, DetectionBatch, TrackBatch
from .scenario import Detection
from .tracking import Track, predict_track, transform_track

_FAKE_EXTENT = (4.5, 1.8, 1.5)
_FAKE_TRACK_ID_BASE = 10_000_000


@dataclass(frozen=True)
class AdversaryParams:
    """Attack design parameters swept by the analysis harness."""

    n_compromised: int = 0
    fp_poisson_lambda: float = 5.0
    fn_fraction: float = 0.2
    coordinated: bool = False
    max_fp_distance: float = 50.0
    onset_time: float = 2.0
    refresh_period: float | None = None
    assign_gate: float = 4.0
    randomize_selection: bool = False
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.n_compromised < 0:
            raise ValueError("n_compromised must be >= 0")
        if not (0.0 <= self.fn_fraction <= 1.0):
            raise ValueError("fn_fraction must be in [0, 1]")
        if self.fp_poisson_lambda < 0:
            raise ValueError("fp_poisson_lambda must be >= 0")
        if self.max_fp_distance <= 0:
            raise ValueError("max_fp_distance must be > 0")

    def to_jsonable(self) -> dict:
        return {
            "n_compromised": self.n_compromised,
            "fp_poisson_lambda": self.fp_poisson_lambda,
            "fn_fraction": self.fn_fraction,
            "coordinated": self.coordinated,
            "max_fp_distance": self.max_fp_distance,
            "onset_time": self.onset_time,
            "refresh_period": self.refresh_period,
            "assign_gate": self.assign_gate,
            "randomize_selection": self.randomize_selection,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class AttackDirective:
    """World-frame target sets an adversary applies each frame."""

    fp_targets: tuple[ObjectState, ...]
    fn_targets: tuple[ObjectState, ...]
    issue_time: float

    def to_jsonable(self) -> dict:
        return {
            "kind": "directive",
            "fp_targets": [s.to_jsonable() for s in self.fp_targets],
            "fn_targets": [s.to_jsonable() for s in self.fn_targets],
            "issue_time": float(self.issue_time),
        }


def _random_fp_states(
    center_xy: np.ndarray,
    k: int,
    max_distance: float,
    issue_time: float,
    rng: np.random.Generator,
) -> tuple[ObjectState, ...]:
    """Pseudo-random spoof states area-uniform in a disk around an agent."""
    states = []
    for _ in range(k):
        rad = max_distance * math.sqrt(rng.random())
        theta = rng.random() * 2.0 * math.pi
        speed = rng.uniform(0.0, 2.0)
        heading = rng.random() * 2.0 * math.pi
        states.append(
            ObjectState(
                position=np.array(
                    [center_xy[0] + rad * math.cos(theta), center_xy[1] + rad * math.sin(theta), 0.0]
                ),
                velocity=np.array([speed * math.cos(heading), speed * math.sin(heading), 0.0]),
                extent=np.asarray(_FAKE_EXTENT),
                yaw=heading,
                frame=WORLD,
                timestamp=issue_time,
            )
        )
    return tuple(states)


def select_targets_uncoordinated(
    detections: list[Detection] | tuple[Detection, ...],
    agent_pose: Pose,
    params: AdversaryParams,
    rng: np.random.Generator,
    now: float,
) -> AttackDirective:
    """Pick this adversary's own targets from its host's current view.

    k_FP ~ Poisson(lambda); k_FN = round(r * |D|) taking the first
    detections in id order; false negatives freeze the struck detections'
    world positions, false positives are pseudo-random states in the disk
    of radius ``max_fp_distance`` around the host.
    """
    gpose = ground_pose(agent_pose)
    ordered = sorted(detections, key=lambda d: d.det_id)
    k_fn = int(round(params.fn_fraction * len(ordered)))
    fn_targets = []
    for det in ordered[:k_fn]:
        world = state_to_parent(det.centroid, gpose)
        fn_targets.append(replace(world, velocity=np.zeros(3), timestamp=now))
    k_fp = int(rng.poisson(params.fp_poisson_lambda))
    fp_targets = _random_fp_states(
        agent_pose.position[:2], k_fp, params.max_fp_distance, now, rng
    )
    return AttackDirective(fp_targets=fp_targets, fn_targets=tuple(fn_targets), issue_time=now)


def select_targets_coordinated(
    reports: dict[str, AdversaryReport],
    params: AdversaryParams,
    rng: np.random.Generator,
    now: float,
    clusterer: SampledAssignmentClusterer | None = None,
) -> dict[str, AttackDirective]:
    """Coordinator-side global target selection.

    Reported tracks are aligned to a common time and frame, clustered with
    the command-center clusterer, and ONE directive (one Poisson draw, one
    fn set drawn from cluster centroids, fp states near one uniformly
    chosen reporting agent) is issued to every adversary.
    """
    if not reports:
        return {}
    clusterer = clusterer or SampledAssignmentClusterer(assign_radius=2.0)
    world_tracks: dict[str, list[Track]] = {}
    for adv_id in sorted(reports):
        report = reports[adv_id]
        aligned = []
        for track in report.tracks:
            predicted = predict_track(track, max(now, track.last_update), 0.0)
            aligned.append(transform_track(predicted, report.pose))
        world_tracks[report.agent_id] = aligned
    clusters = clusterer.cluster(world_tracks)

    k_fp = int(rng.poisson(params.fp_poisson_lambda))
    k_fn = int(round(params.fn_fraction * len(clusters)))
    fn_targets = []
    if clusters and k_fn > 0:
        chosen = rng.choice(len(clusters), size=min(k_fn, len(clusters)), replace=False)
        for idx in sorted(int(i) for i in chosen):
            cluster = clusters[idx]
            rep = cluster.members[0][1]
            fn_targets.append(
                ObjectState(
                    position=cluster.centroid.copy(),
                    velocity=np.zeros(3),
                    extent=rep.extent.copy(),
                    yaw=rep.yaw,
                    frame=WORLD,
                    timestamp=now,
                )
            )
    host_ids = sorted(reports)
    host = reports[host_ids[int(rng.integers(0, len(host_ids)))]]
    fp_targets = _random_fp_states(
        host.pose.position[:2], k_fp, params.max_fp_distance, now, rng
    )
    directive = AttackDirective(
        fp_targets=fp_targets, fn_targets=tuple(fn_targets), issue_time=now
    )
    return {adv_id: directive for adv_id in sorted(reports)}


def _propagate(state: ObjectState, now: float) -> ObjectState:
    dt = now - state.timestamp
    return replace(state, position=state.position + state.velocity * dt, timestamp=now)


def apply_directive_detections(
    batch: DetectionBatch,
    directive: AttackDirective,
    now: float,
    params: AdversaryParams,
) -> DetectionBatch:
    """Manipulate a detection batch per the directive.

    Detections assigned (within the gate) to a false-negative target are
    removed; each false-positive target is propagated to ``now`` and
    appended as a detection iff it is within ``max_fp_distance`` of the
    agent, carrying a plausible extent and the agent's measurement noise.
    """
    agent_frame = f"agent:{batch.agent_id}"
    gpose = ground_pose(batch.pose)
    survivors = list(batch.detections)
    if directive.fn_targets and survivors:
        det_world = np.array(
            [state_to_parent(d.centroid, gpose).position for d in survivors]
        )
        fn_pos = np.array([t.position for t in directive.fn_targets])
        pairs, _, _ = assign_points(det_world, fn_pos, params.assign_gate)
        struck = {i for i, _ in pairs}
        survivors = [d for i, d in enumerate(survivors) if i not in struck]

    appended: list[Detection] = []
    noise = (
        batch.detections[0].measurement_noise
        if batch.detections
        else np.eye(3) * 0.15**2
    )
    agent_xy = batch.pose.position[:2]
    for i, target in enumerate(directive.fp_targets):
        current = _propagate(target, now)
        if np.hypot(*(current.position[:2] - agent_xy)) > params.max_fp_distance:
            continue
        local = state_to_local(current, gpose, agent_frame)
        appended.append(
            Detection(
                centroid=replace(local, velocity=np.zeros(3)),
                measurement_noise=noise,
                source_agent=batch.agent_id,
                timestamp=now,
                det_id=f"{batch.agent_id}:{now:.3f}:fp{i:03d}",
            )
        )
    return DetectionBatch(
        agent_id=batch.agent_id, pose=batch.pose, detections=tuple(survivors + appended)
    )


def apply_directive_tracks(
    batch: TrackBatch,
    directive: AttackDirective,
    now: float,
    params: AdversaryParams,
) -> TrackBatch:
    """Manipulate an in-flight track batch per the directive."""
    gpose = ground_pose(batch.pose)
    survivors = list(batch.tracks)
    if directive.fn_targets and survivors:
        trk_world = np.array([transform_track(t, gpose).position for t in survivors])
        fn_pos = np.array([t.position for t in directive.fn_targets])
        pairs, _, _ = assign_points(trk_world, fn_pos, params.assign_gate)
        struck = {i for i, _ in pairs}
        survivors = [t for i, t in enumerate(survivors) if i not in struck]

    appended: list[Track] = []
    agent_xy = batch.pose.position[:2]
    nominal_cov = np.diag([0.25, 0.25, 0.25, 1.0, 1.0, 1.0])
    for i, target in enumerate(directive.fp_targets):
        current = _propagate(target, now)
        if np.hypot(*(current.position[:2] - agent_xy)) > params.max_fp_distance:
            continue
        local = state_to_local(current, gpose, f"agent:{batch.agent_id}")
        appended.append(
            Track(
                id=_FAKE_TRACK_ID_BASE + i,
                mean=np.concatenate([local.position, local.velocity]),
                covariance=nominal_cov.copy(),
                extent=np.asarray(current.extent, dtype=float).copy(),
                yaw=local.yaw,
                hits=999,
                misses_in_a_row=0,
                confirmed=True,
                last_update=now,
                owner=batch.agent_id,
                frame=f"agent:{batch.agent_id}",
            )
        )
    return TrackBatch(
        agent_id=batch.agent_id,
        pose=batch.pose,
        tracks=tuple(survivors + appended),
        timestamp=batch.timestamp,
    )


class UncoordinatedAdversary:
    """Interposes on ``detections/<agent>`` and manipulates locally."""

    def __init__(
        self,
        bus: SimBus,
        node_id: str,
        host_agent: str,
        republish_topic: str,
        params: AdversaryParams,
        rng: np.random.Generator,
        audit: list[dict] | None = None,
    ):
        self.bus = bus
        self.node_id = node_id
        self.host_agent = host_agent
        self.republish_topic = republish_topic
        self.params = params
        self.rng = rng
        self.directive: AttackDirective | None = None
        self.audit = audit

    def _due_for_selection(self, now: float) -> bool:
        if now + 1e-9 < self.params.onset_time:
            return False
        if self.directive is None:
            return True
        if self.params.refresh_period is None:
            return False
        return now - self.directive.issue_time >= self.params.refresh_period - 1e-9

    def on_detections(self, when: float, topic: str, msg: StampedMessage) -> None:
        batch: DetectionBatch = msg.payload
        if self._due_for_selection(when):
            self.directive = select_targets_uncoordinated(
                list(batch.detections), batch.pose, self.params, self.rng, when
            )
            if self.audit is not None:
                self.audit.append(
                    {
                        "t": when,
                        "adversary": self.node_id,
                        "event": "select",
                        "fp_targets": len(self.directive.fp_targets),
                        "fn_targets": len(self.directive.fn_targets),
                    }
                )
        out = batch
        if self.directive is not None:
            out = apply_directive_detections(batch, self.directive, when, self.params)
            if self.audit is not None:
                self.audit.append(
                    {
                        "t": when,
                        "adversary": self.node_id,
                        "event": "apply",
                        "removed": len(batch.detections) - sum(
                            1 for d in out.detections if not d.det_id.split(":")[-1].startswith("fp")
                        ),
                        "injected": sum(
                            1 for d in out.detections if d.det_id.split(":")[-1].startswith("fp")
                        ),
                    }
                )
        self.bus.publish(
            StampedMessage(
                topic=self.republish_topic, source=msg.source, timestamp=when, payload=out
            )
        )


class CoordinatedAdversary:
    """Interposes on ``tracks/<agent>``; applies the coordinator's directive."""

    def __init__(
        self,
        bus: SimBus,
        node_id: str,
        host_agent: str,
        republish_topic: str,
        report_topic: str,
        params: AdversaryParams,
        audit: list[dict] | None = None,
    ):
        self.bus = bus
        self.node_id = node_id
        self.host_agent = host_agent
        self.republish_topic = republish_topic
        self.report_topic = report_topic
        self.params = params
        self.directive: AttackDirective | None = None
        self.audit = audit

    def on_directive(self, when: float, topic: str, msg: StampedMessage) -> None:
        self.directive = msg.payload
        if self.audit is not None:
            self.audit.append(
                {
                    "t": when,
                    "adversary": self.node_id,
                    "event": "directive",
                    "fp_targets": len(self.directive.fp_targets),
                    "fn_targets": len(self.directive.fn_targets),
                }
            )

    def on_tracks(self, when: float, topic: str, msg: StampedMessage) -> None:
        batch: TrackBatch = msg.payload
        # the coordinator sees the host's uncompromised tracks
        self.bus.publish(
            StampedMessage(
                topic=self.report_topic,
                source=self.node_id,
                timestamp=when,
                payload=AdversaryReport(
                    adversary_id=self.node_id,
                    agent_id=batch.agent_id,
                    pose=batch.pose,
                    tracks=batch.tracks,
                    timestamp=when,
                ),
            )
        )
        out = batch
        if self.directive is not None:
            out = apply_directive_tracks(batch, self.directive, when, self.params)
            if self.audit is not None:
                self.audit.append(
                    {
                        "t": when,
                        "adversary": self.node_id,
                        "event": "apply",
                        "removed": len(batch.tracks)
                        - sum(1 for t in out.tracks if t.id < _FAKE_TRACK_ID_BASE),
                        "injected": sum(1 for t in out.tracks if t.id >= _FAKE_TRACK_ID_BASE),
                    }
                )
        self.bus.publish(
            StampedMessage(
                topic=self.republish_topic, source=msg.source, timestamp=when, payload=out
            )
        )


class AttackCoordinator:
    """Pools adversary reports and issues one shared directive."""

    def __init__(
        self,
        bus: SimBus,
        node_id: str,
        adversary_ids: list[str],
        directive_topics: dict[str, str],
        params: AdversaryParams,
        rng: np.random.Generator,
        clusterer: SampledAssignmentClusterer | None = None,
        audit: list[dict] | None = None,
    ):
        self.bus = bus
        self.node_id = node_id
        self.adversary_ids = sorted(adversary_ids)
        self.directive_topics = directive_topics
        self.params = params
        self.rng = rng
        self.clusterer = clusterer
        self.reports: dict[str, AdversaryReport] = {}
        self.last_issue: float | None = None
        self.audit = audit

    def _due_for_issue(self, now: float) -> bool:
        if now + 1e-9 < self.params.onset_time:
            return False
        if len(self.reports) < len(self.adversary_ids):
            return False
        if self.last_issue is None:
            return True
        if self.params.refresh_period is None:
            return False
        return now - self.last_issue >= self.params.refresh_period - 1e-9

    def on_report(self, when: float, topic: str, msg: StampedMessage) -> None:
        report: AdversaryReport = msg.payload
        self.reports[report.adversary_id] = report
        if not self._due_for_issue(when):
            return
        directives = select_targets_coordinated(
            self.reports, self.params, self.rng, when, self.clusterer
        )
        self.last_issue = when
        if self.audit is not None and directives:
            any_directive = next(iter(directives.values()))
            self.audit.append(
                {
                    "t": when,
                    "adversary": self.node_id,
                    "event": "select",
                    "fp_targets": len(any_directive.fp_targets),
                    "fn_targets": len(any_directive.fn_targets),
                }
            )
        for adv_id in self.adversary_ids:
            directive = directives.get(adv_id)
            if directive is None:
                continue
            self.bus.publish(
                StampedMessage(
                    topic=self.directive_topics[adv_id],
                    source=self.node_id,
                    timestamp=when,
                    payload=directive,
                )
            )
