"""Run orchestration: scenario, bus, agents, command center, adversaries.

``launch`` wires one manifest into a live topology, drives the event loop
frame by frame, scores every frame against ground truth, and optionally
writes the full artifact set (delimited metrics, JSONL logs, snapshots)
to an output directory.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversary import (
    AttackCoordinator,
    CoordinatedAdversary,
    UncoordinatedAdversary,
)
from .bus import INSTANT, ChannelModel, RemapRule, SimBus, StampedMessage
from .command_center import CommandCenterNode, CommandCenterPipeline
from .config import AgentPipeline, RunManifest, default_registry
from .geometry import WORLD, Pose, ground_pose
from .messages import CCTracks, DetectionBatch, StatusMsg, TrackBatch
from .metrics import FrameRow, RunRecord, evaluate_run_frames, summarize_run
from .rng import substream
from .scenario import GroundTruthFrame, generate_scenario, load_frames, save_frames, sense
from .tracking import MultiObjectTracker, Track, transform_track


class RunError(RuntimeError):
    """A simulation run failed."""


def payload_digest(payload) -> str:
    """Stable short digest of a payload for the event log."""
    blob = json.dumps(payload.to_jsonable(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


class AgentNode:
    """One agent: local safety-critical tracker plus the received picture."""

    def __init__(self, bus: SimBus, agent_id: str, pipeline: AgentPipeline):
        self.bus = bus
        self.agent_id = agent_id
        self.frame = f"agent:{agent_id}"
        self.tracker = MultiObjectTracker(pipeline.tracker, owner=agent_id, frame=self.frame)
        self.local_confirmed: list[Track] = []
        self.local_pose: Pose | None = None
        self.mission_picture: CCTracks | None = None

    def on_detections(self, when: float, topic: str, msg: StampedMessage) -> None:
        batch: DetectionBatch = msg.payload
        self.local_confirmed = self.tracker.step(list(batch.detections), when)
        self.local_pose = batch.pose
        # heartbeat first so broker discovery precedes the data it gates
        self.bus.publish(
            StampedMessage(
                topic=f"status/{self.agent_id}",
                source=self.agent_id,
                timestamp=when,
                payload=StatusMsg(self.agent_id),
            )
        )
        self.bus.publish(
            StampedMessage(
                topic=f"tracks/{self.agent_id}",
                source=self.agent_id,
                timestamp=when,
                payload=TrackBatch(
                    agent_id=self.agent_id,
                    pose=batch.pose,
                    tracks=tuple(self.local_confirmed),
                    timestamp=when,
                ),
            )
        )

    def on_cc_tracks(self, when: float, topic: str, msg: StampedMessage) -> None:
        # mission-critical picture is stored, never merged into local tracks
        self.mission_picture = msg.payload


class _Recorder:
    """Zero-latency tap on outgoing track streams plus per-frame snapshots."""

    def __init__(self, agents: list[str]):
        self.agents = agents
        self.latest_published: dict[str, TrackBatch] = {}
        self.ego_pictures: list[list[np.ndarray]] = []
        self.cc_pictures: list[list[np.ndarray]] = []
        self.published: list[dict[str, list[np.ndarray]]] = []
        self.picture_log: list[dict] = []

    def on_tracks(self, when: float, topic: str, msg: StampedMessage) -> None:
        batch: TrackBatch = msg.payload
        self.latest_published[batch.agent_id] = batch

    @staticmethod
    def _world_states(tracks, pose) -> list[Track]:
        gpose = ground_pose(pose)
        return [transform_track(t, gpose) for t in tracks]

    @staticmethod
    def _items(tracks: list[Track]) -> list[dict]:
        return [
            {
                "p": [float(v) for v in t.position],
                "yaw": float(t.yaw),
                "extent": [float(v) for v in t.extent],
            }
            for t in tracks
        ]

    def snapshot(self, k: int, frame: GroundTruthFrame, ego: AgentNode) -> None:
        ego_world: list[Track] = []
        if ego.local_confirmed:
            ego_world = self._world_states(ego.local_confirmed, frame.agent_poses["ego"])
        cc_world: list[Track] = []
        if ego.mission_picture is not None:
            cc_world = [t for t in ego.mission_picture.tracks]
        published_world: dict[str, list[Track]] = {}
        for agent in self.agents:
            batch = self.latest_published.get(agent)
            if batch is None:
                published_world[agent] = []
                continue
            published_world[agent] = self._world_states(batch.tracks, batch.pose)

        self.ego_pictures.append([t.position for t in ego_world])
        self.cc_pictures.append([t.position for t in cc_world])
        self.published.append({a: [t.position for t in ts] for a, ts in published_world.items()})
        self.picture_log.append(
            {
                "frame": k,
                "t": frame.timestamp,
                "ego_local": self._items(ego_world),
                "cc": self._items(cc_world),
                "published": {a: self._items(ts) for a, ts in sorted(published_world.items())},
            }
        )


@dataclass(eq=False)
class RunResult:
    """In-memory outcome of one run."""

    seed: int
    coordinated: bool
    n_adversaries: int
    compromised: tuple[str, ...]
    agents: tuple[str, ...]
    rows: tuple[FrameRow, ...]
    frames: list[GroundTruthFrame]
    picture_log: list[dict]
    attack_events: list[dict]
    summary: dict
    out_dir: Path | None = None
    cc_debug: list | None = None

    def record(self) -> RunRecord:
        return RunRecord(
            seed=self.seed,
            coordinated=self.coordinated,
            n_adversaries=self.n_adversaries,
            compromised=self.compromised,
            agents=self.agents,
            rows=self.rows,
        )


def select_compromised(manifest: RunManifest) -> list[str]:
    """Deterministic choice of attacked infrastructure agents."""
    params = manifest.adversary
    infra = [f"infra:{i}" for i in range(manifest.scenario.n_infrastructure)]
    if params.randomize_selection and infra:
        seed = params.seed if params.seed is not None else manifest.seed
        perm = substream(seed, "compromise").permutation(len(infra))
        infra = [infra[int(i)] for i in perm]
    return infra[: params.n_compromised]


def launch(
    manifest: RunManifest,
    out_dir: str | Path | None = None,
    registry=None,
    log_events: bool | None = None,
) -> RunResult:
    """Instantiate and execute one run; write artifacts when a directory is set."""
    registry = registry or default_registry()
    manifest.validate(registry)

    out_path: Path | None = None
    if out_dir is not None:
        out_path = Path(out_dir)
    elif manifest.out_dir:
        out_path = Path(manifest.out_dir)
    write = out_path is not None
    if log_events is None:
        log_events = write

    master = manifest.seed
    scen = manifest.scenario
    eff_seed = scen.seed if scen.seed is not None else master
    if manifest.frames_log:
        # replay an externally produced dataset in place of the generator
        frames = load_frames(manifest.frames_log)
        if not frames:
            raise RunError(f"frame log {manifest.frames_log!r} is empty")
        agents = sorted(frames[0].agent_poses)
        if "ego" not in agents:
            raise RunError("replayed frame logs must include an 'ego' agent pose")
        agents = ["ego"] + [a for a in agents if a != "ego"]
    else:
        frames = generate_scenario(scen, seed=eff_seed)
        agents = scen.agent_ids()
    params = manifest.adversary
    compromised = select_compromised(manifest)
    attack_active = len(compromised) > 0

    bus = SimBus(master_seed=master, digest_fn=payload_digest if log_events else None)

    # nodes and default uplink channels
    bus.register_node("driver", INSTANT)
    bus.register_node("recorder", INSTANT)
    bus.register_node("cc", INSTANT)
    for agent in agents:
        channel = manifest.ego_channel if agent == "ego" else manifest.infrastructure_channel
        bus.register_node(agent, channel)
        bus.set_link(agent, agent, INSTANT)       # local sensor feed
        bus.set_link(agent, "recorder", INSTANT)  # metrics tap
        bus.set_link("cc", agent, channel)        # downlink mirrors the uplink
    bus.set_link("cc", "recorder", INSTANT)
    bus.set_link("driver", "recorder", INSTANT)

    # topics
    bus.register_topic("truth")
    bus.register_topic("cc/cycle")
    bus.register_topic("cc/tracks")
    for agent in agents:
        bus.register_topic(f"detections/{agent}")
        bus.register_topic(f"tracks/{agent}")
        bus.register_topic(f"status/{agent}")

    # agents
    agent_nodes: dict[str, AgentNode] = {}
    for agent in agents:
        pipeline = registry.build(manifest.agent_pipeline, "$.agent_pipeline")
        node = AgentNode(bus, agent, pipeline)
        agent_nodes[agent] = node
        bus.subscribe(f"detections/{agent}", agent, node.on_detections)
        bus.subscribe("cc/tracks", agent, node.on_cc_tracks)

    # command center
    cc_pipeline: CommandCenterPipeline = registry.build(manifest.command_center, "$.command_center")
    cc_node = CommandCenterNode(
        bus, cc_pipeline, manifest.collation, node_id="cc", debug=manifest.cc_debug
    )
    for agent in agents:
        bus.subscribe(f"tracks/{agent}", "cc", cc_node.on_tracks)
        bus.subscribe(f"status/{agent}", "cc", cc_node.on_status)
    bus.subscribe("cc/cycle", "cc", cc_node.on_cycle)

    # recorder taps the post-interception track streams
    recorder = _Recorder(agents)
    for agent in agents:
        bus.subscribe(f"tracks/{agent}", "recorder", recorder.on_tracks)
    bus.subscribe("truth", "recorder", lambda when, topic, msg: None)

    # adversaries
    attack_events: list[dict] = []
    attack_seed = params.seed if params.seed is not None else master
    if attack_active and not params.coordinated:
        for agent in compromised:
            adv_id = f"adv:{agent}"
            bus.register_node(adv_id, INSTANT)
            adv = UncoordinatedAdversary(
                bus,
                adv_id,
                agent,
                republish_topic=f"detections/{agent}/x",
                params=params,
                rng=substream(attack_seed, "attack", agent),
                audit=attack_events,
            )
            bus.add_remap(
                RemapRule(f"detections/{agent}", adv_id, f"detections/{agent}/x"),
                adv.on_detections,
            )
    elif attack_active and params.coordinated:
        adv_ids = [f"adv:{agent}" for agent in compromised]
        directive_topics = {adv_id: f"adv/directive/{adv_id}" for adv_id in adv_ids}
        bus.register_node("coordinator", INSTANT)
        for agent, adv_id in zip(compromised, adv_ids):
            bus.register_node(adv_id, INSTANT)
            bus.register_topic(f"adv/report/{adv_id}")
            bus.register_topic(directive_topics[adv_id])
            bus.set_link(adv_id, "coordinator", manifest.adversary_channel)
            bus.set_link("coordinator", adv_id, manifest.adversary_channel)
            adv = CoordinatedAdversary(
                bus,
                adv_id,
                agent,
                republish_topic=f"tracks/{agent}/x",
                report_topic=f"adv/report/{adv_id}",
                params=params,
                audit=attack_events,
            )
            bus.add_remap(
                RemapRule(f"tracks/{agent}", adv_id, f"tracks/{agent}/x"), adv.on_tracks
            )
            bus.subscribe(directive_topics[adv_id], adv_id, adv.on_directive)
        coordinator = AttackCoordinator(
            bus,
            "coordinator",
            adv_ids,
            directive_topics,
            params,
            rng=substream(attack_seed, "attack", "coordinator"),
            clusterer=cc_pipeline.clustering,
            audit=attack_events,
        )
        for adv_id in adv_ids:
            bus.subscribe(f"adv/report/{adv_id}", "coordinator", coordinator.on_report)

    # main loop: publish each frame, deliver everything due, then score state
    for k, frame in enumerate(frames):
        t = frame.timestamp
        bus.publish(StampedMessage(topic="truth", source="driver", timestamp=t, payload=frame))
        for agent in agents:
            pose = frame.agent_poses[agent]
            detections = sense(
                pose,
                scen.sensor_for(agent),
                frame,
                substream(eff_seed, "sense", agent, k),
                agent_id=agent,
            )
            bus.publish(
                StampedMessage(
                    topic=f"detections/{agent}",
                    source=agent,
                    timestamp=t,
                    payload=DetectionBatch(
                        agent_id=agent, pose=ground_pose(pose), detections=tuple(detections)
                    ),
                )
            )
        bus.publish(
            StampedMessage(
                topic="cc/cycle",
                source="driver",
                timestamp=t + manifest.cc_cycle_offset,
                payload=StatusMsg("cc"),
            )
        )
        bus.step(t)
        recorder.snapshot(k, frame, agent_nodes["ego"])

    rows = evaluate_run_frames(
        frames,
        recorder.ego_pictures,
        recorder.cc_pictures,
        recorder.published,
        scen,
        threshold=manifest.truth_distance,
        radius=manifest.match_radius,
    )

    result = RunResult(
        seed=master,
        coordinated=params.coordinated if attack_active else False,
        n_adversaries=len(compromised),
        compromised=tuple(compromised),
        agents=tuple(agents),
        rows=tuple(rows),
        frames=frames,
        picture_log=recorder.picture_log,
        attack_events=attack_events,
        summary={},
        out_dir=out_path,
        cc_debug=cc_node.debug_log,
    )
    result.summary = summarize_run(result.record())

    if write:
        assert out_path is not None
        write_run_outputs(result, manifest, out_path, bus)
    return result


# ---------------------------------------------------------------- artifacts


def _csv_columns(rows: tuple[FrameRow, ...]) -> list[str]:
    keys = sorted({k for row in rows for k in row.counts})
    return keys


def write_run_outputs(result: RunResult, manifest: RunManifest, out_path: Path, bus: SimBus) -> None:
    out_path.mkdir(parents=True, exist_ok=True)

    keys = _csv_columns(result.rows)
    with open(out_path / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "t"] + keys)
        for row in result.rows:
            writer.writerow(
                [row.frame, f"{row.t:.3f}"] + [row.counts.get(k, 0) for k in keys]
            )

    adversary_echo = (
        manifest.adversary.to_jsonable() if result.n_adversaries > 0 else None
    )
    summary_payload = {
        "seed": result.seed,
        "n_frames": len(result.rows),
        "agents": list(result.agents),
        "adversary": adversary_echo,
        "compromised": list(result.compromised),
        "coordinated": result.coordinated,
        "n_adversaries": result.n_adversaries,
        "summary": {k: [v[0], v[1]] for k, v in sorted(result.summary.items())},
    }
    with open(out_path / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(summary_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(out_path / "table.md", "w", encoding="utf-8") as fh:
        fh.write("| metric | mean | std |\n|---|---|---|\n")
        for key, (mean, std) in sorted(result.summary.items()):
            fh.write(f"| {key} | {mean:.2f} | {std:.2f} |\n")

    with open(out_path / "events.jsonl", "w", encoding="utf-8") as fh:
        for event in bus.event_log:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    with open(out_path / "attack.jsonl", "w", encoding="utf-8") as fh:
        for event in result.attack_events:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    save_frames(result.frames, out_path / "frames.jsonl")

    with open(out_path / "pictures.jsonl", "w", encoding="utf-8") as fh:
        for entry in result.picture_log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    run_config = {
        "seed": result.seed,
        "scenario": manifest.scenario.to_jsonable(),
        "truth_distance": manifest.truth_distance,
        "match_radius": manifest.match_radius,
        "agents": list(result.agents),
        "compromised": list(result.compromised),
        "adversary": adversary_echo,
    }
    with open(out_path / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(run_config, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if result.cc_debug is not None:
        with open(out_path / "cc_debug.jsonl", "w", encoding="utf-8") as fh:
            for entry in result.cc_debug:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    if manifest.snapshot_every:
        from .plots import render_run_frame

        snap_dir = out_path / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for row in result.rows:
            if row.frame % manifest.snapshot_every != 0:
                continue
            for picture in ("ego", "cc"):
                render_run_frame(
                    result, manifest, row.frame, picture,
                    snap_dir / f"frame_{row.frame:05d}_{picture}.png",
                )
