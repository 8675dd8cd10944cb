"""Synthetic scenario generation and the simulated detection model.

Replaces a recorded multi-agent dataset: ground-truth object trajectories,
one mobile ego plus static elevated infrastructure agents, and per-frame
noisy detections with range / field-of-view / occlusion / miss / clutter
effects. Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import WORLD, ObjectState, Pose, ground_pose, normalize_angle, state_to_local

# Observers mounted above this height see over ground traffic and skip
# the occlusion test (elevated infrastructure vantage).
OCCLUSION_EXEMPT_HEIGHT = 5.0

_DEFAULT_EXTENT = (4.5, 1.8, 1.5)


class ConfigError(ValueError):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class SensorModel:
    """Detection model of one agent's perception stack."""

    max_range: float = 75.0
    azimuth_fov: float = 2.0 * math.pi
    detection_prob: float = 0.95
    position_noise_std: float = 0.15
    clutter_rate: float = 0.0
    occlusion_enabled: bool = True

    def __post_init__(self) -> None:
        if self.max_range <= 0:
            raise ConfigError("max_range must be > 0")
        if not (0.0 < self.azimuth_fov <= 2.0 * math.pi + 1e-12):
            raise ConfigError("azimuth_fov must be in (0, 2*pi]")
        if not (0.0 <= self.detection_prob <= 1.0):
            raise ConfigError("detection_prob must be in [0, 1]")
        if self.clutter_rate < 0.0:
            raise ConfigError("clutter_rate must be >= 0")

    def measurement_covariance(self) -> np.ndarray:
        return np.eye(3) * float(self.position_noise_std) ** 2

    def to_jsonable(self) -> dict:
        return {
            "max_range": self.max_range,
            "azimuth_fov": self.azimuth_fov,
            "detection_prob": self.detection_prob,
            "position_noise_std": self.position_noise_std,
            "clutter_rate": self.clutter_rate,
            "occlusion_enabled": self.occlusion_enabled,
        }


@dataclass(frozen=True, eq=False)
class Detection:
    """One instantaneous noisy observation, expressed in the agent frame."""

    centroid: ObjectState
    measurement_noise: np.ndarray
    source_agent: str
    timestamp: float
    det_id: str

    def to_jsonable(self) -> dict:
        return {
            "centroid": self.centroid.to_jsonable(),
            "noise_std": float(math.sqrt(max(self.measurement_noise[0, 0], 0.0))),
            "source_agent": self.source_agent,
            "timestamp": float(self.timestamp),
            "det_id": self.det_id,
        }


@dataclass(frozen=True, eq=False)
class GroundTruthFrame:
    """World-frame truth for one simulation frame."""

    timestamp: float
    objects: tuple[ObjectState, ...]
    agent_poses: dict[str, Pose]

    def to_jsonable(self) -> dict:
        return {
            "timestamp": float(self.timestamp),
            "objects": [o.to_jsonable() for o in self.objects],
            "agent_poses": {a: p.to_jsonable() for a, p in sorted(self.agent_poses.items())},
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "GroundTruthFrame":
        return cls(
            timestamp=d["timestamp"],
            objects=tuple(ObjectState.from_jsonable(o) for o in d["objects"]),
            agent_poses={a: Pose.from_jsonable(p) for a, p in d["agent_poses"].items()},
        )


def _default_ego_waypoints() -> tuple[tuple[float, float], ...]:
    return ((-30.0, -25.0), (0.0, 0.0), (30.0, 25.0))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to synthesize one deterministic scene.

    The default mirrors the case-study layout: four elevated static agents
    around one mobile ego at 10 Hz.
    """

    seed: int | None = None
    duration: float = 30.0
    frame_rate: float = 10.0
    n_infrastructure: int = 4
    ego_waypoints: tuple[tuple[float, float], ...] = field(default_factory=_default_ego_waypoints)
    ego_speed: float = 4.0
    ego_height: float = 1.7
    object_count: int = 12
    object_speed_range: tuple[float, float] = (1.0, 4.0)
    map_extent: float = 80.0
    ego_sensor: SensorModel = field(
        default_factory=lambda: SensorModel(max_range=40.0, azimuth_fov=2.0 * math.pi)
    )
    infrastructure_sensor: SensorModel = field(
        default_factory=lambda: SensorModel(max_range=90.0, azimuth_fov=0.5 * math.pi)
    )
    infrastructure_height: float = 15.0
    infrastructure_pitch: float = -math.radians(30.0)
    infrastructure_ring_fraction: float = 0.375

    def __post_init__(self) -> None:
        if self.frame_rate <= 0:
            raise ConfigError("frame_rate must be > 0")
        if self.duration <= 0:
            raise ConfigError("duration must be > 0")
        if self.n_infrastructure < 0:
            raise ConfigError("n_infrastructure must be >= 0")
        if self.object_count < 0:
            raise ConfigError("object_count must be >= 0")
        if len(self.ego_waypoints) < 1:
            raise ConfigError("ego_waypoints must contain at least one waypoint")
        lo, hi = self.object_speed_range
        if lo < 0 or hi < lo:
            raise ConfigError("object_speed_range must satisfy 0 <= lo <= hi")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))

    def frame_time(self, k: int) -> float:
        return k / self.frame_rate

    def agent_ids(self) -> list[str]:
        return ["ego"] + [f"infra:{i}" for i in range(self.n_infrastructure)]

    def sensor_for(self, agent_id: str) -> SensorModel:
        return self.ego_sensor if agent_id == "ego" else self.infrastructure_sensor

    def to_jsonable(self) -> dict:
        return {
            "seed": self.seed,
            "duration": self.duration,
            "frame_rate": self.frame_rate,
            "n_infrastructure": self.n_infrastructure,
            "ego_waypoints": [list(w) for w in self.ego_waypoints],
            "ego_speed": self.ego_speed,
            "ego_height": self.ego_height,
            "object_count": self.object_count,
            "object_speed_range": list(self.object_speed_range),
            "map_extent": self.map_extent,
            "ego_sensor": self.ego_sensor.to_jsonable(),
            "infrastructure_sensor": self.infrastructure_sensor.to_jsonable(),
            "infrastructure_height": self.infrastructure_height,
            "infrastructure_pitch": self.infrastructure_pitch,
            "infrastructure_ring_fraction": self.infrastructure_ring_fraction,
        }


class _Polyline:
    """Constant-speed traversal of a waypoint sequence."""

    def __init__(self, points: np.ndarray, speed: float, loop: bool):
        self.points = np.asarray(points, dtype=float)
        self.speed = float(speed)
        self.loop = loop
        pts = self.points
        if loop and len(pts) > 1:
            pts = np.vstack([pts, pts[:1]])
        self._pts = pts
        segs = np.diff(pts, axis=0) if len(pts) > 1 else np.zeros((0, 2))
        self._seg_len = np.sqrt(np.sum(segs * segs, axis=1)) if len(segs) else np.zeros(0)
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.total = float(self._cum[-1])

    def state_at(self, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        """Return (position_xy, velocity_xy, heading) at time t."""
        if self.total < 1e-9 or self.speed < 1e-12:
            p = self._pts[0]
            return p.copy(), np.zeros(2), 0.0
        s = self.speed * t
        if self.loop:
            s = math.fmod(s, self.total)
        elif s >= self.total:
            # hold the final pose
            p = self._pts[-1]
            d = self._pts[-1] - self._pts[-2]
            heading = math.atan2(d[1], d[0])
            return p.copy(), np.zeros(2), heading
        idx = int(np.searchsorted(self._cum, s, side="right")) - 1
        idx = min(max(idx, 0), len(self._seg_len) - 1)
        seg_start = self._pts[idx]
        d = self._pts[idx + 1] - seg_start
        L = self._seg_len[idx]
        frac = 0.0 if L < 1e-12 else (s - self._cum[idx]) / L
        pos = seg_start + frac * d
        heading = math.atan2(d[1], d[0])
        vel = self.speed * d / L if L > 1e-12 else np.zeros(2)
        return pos, vel, heading


def _object_paths(cfg: ScenarioConfig, rng: np.random.Generator) -> list[tuple[_Polyline, np.ndarray]]:
    half = 0.4 * cfg.map_extent
    lo, hi = cfg.object_speed_range
    paths = []
    for _ in range(cfg.object_count):
        n_wp = int(rng.integers(4, 7))
        pts = rng.uniform(-half, half, size=(n_wp, 2))
        # order around the centroid so the loop is a simple polygon
        center = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0]))
        pts = pts[order]
        speed = float(rng.uniform(lo, hi))
        extent = np.array(
            [rng.uniform(4.2, 4.9), rng.uniform(1.7, 2.0), rng.uniform(1.4, 1.6)]
        )
        paths.append((_Polyline(pts, speed, loop=True), extent))
    return paths


def infrastructure_pose(cfg: ScenarioConfig, index: int, timestamp: float = 0.0) -> Pose:
    """Static elevated pose of one infrastructure agent, facing map center."""
    n = max(cfg.n_infrastructure, 1)
    angle = 2.0 * math.pi * (index + 0.5) / n
    radius = cfg.infrastructure_ring_fraction * cfg.map_extent
    x, y = radius * math.cos(angle), radius * math.sin(angle)
    return Pose(
        position=np.array([x, y, cfg.infrastructure_height]),
        yaw=normalize_angle(math.atan2(-y, -x)),
        pitch=cfg.infrastructure_pitch,
        frame=WORLD,
        timestamp=timestamp,
    )


def generate_scenario(cfg: ScenarioConfig, seed: int | None = None) -> list[GroundTruthFrame]:
    """Generate the full deterministic ground-truth frame sequence.

    ``seed`` overrides ``cfg.seed``; one of the two must be set.
    """
    effective_seed = cfg.seed if seed is None else seed
    if effective_seed is None:
        raise ConfigError("scenario seed not set")
    from .rng import substream

    obj_rng = substream(int(effective_seed), "scenario-objects")
    paths = _object_paths(cfg, obj_rng)
    ego_path = _Polyline(np.asarray(cfg.ego_waypoints, dtype=float), cfg.ego_speed, loop=False)

    infra_poses = [infrastructure_pose(cfg, i) for i in range(cfg.n_infrastructure)]

    frames: list[GroundTruthFrame] = []
    for k in range(cfg.n_frames):
        t = cfg.frame_time(k)
        objects = []
        for path, extent in paths:
            pos2, vel2, heading = path.state_at(t)
            objects.append(
                ObjectState(
                    position=np.array([pos2[0], pos2[1], 0.0]),
                    velocity=np.array([vel2[0], vel2[1], 0.0]),
                    extent=extent,
                    yaw=heading,
                    frame=WORLD,
                    timestamp=t,
                )
            )
        epos, evel, eyaw = ego_path.state_at(t)
        poses = {
            "ego": Pose(
                position=np.array([epos[0], epos[1], cfg.ego_height]),
                yaw=eyaw,
                frame=WORLD,
                timestamp=t,
            )
        }
        for i, base in enumerate(infra_poses):
            poses[f"infra:{i}"] = replace(base, timestamp=t)
        frames.append(GroundTruthFrame(timestamp=t, objects=tuple(objects), agent_poses=poses))
    return frames


def is_occluded(observer: Pose, target: ObjectState, others: list[ObjectState] | tuple[ObjectState, ...]) -> bool:
    """Ground-plane occlusion test.

    True iff some other object's BEV footprint disk (radius = half its
    diagonal extent) intersects the observer->target segment at a range
    nearer than the target.
    """
    o = observer.position[:2]
    tp = target.position[:2]
    seg = tp - o
    L = float(np.hypot(seg[0], seg[1]))
    if L < 1e-9:
        return False
    d = seg / L
    for other in others:
        if other is target:
            continue
        c = other.position[:2]
        r = 0.5 * float(np.hypot(other.extent[0], other.extent[1]))
        w = c - o
        proj = float(w @ d)
        perp_sq = float(w @ w) - proj * proj
        disc = r * r - perp_sq
        if disc < 0.0:
            continue
        root = math.sqrt(max(disc, 0.0))
        s_enter, s_exit = proj - root, proj + root
        # blocks only if the ray pierces the disk strictly before the target
        if s_enter < L - 1e-9 and s_exit > 1e-9:
            return True
    return False


def visible(
    agent_pose: Pose,
    model: SensorModel,
    target: ObjectState,
    others: list[ObjectState] | tuple[ObjectState, ...] = (),
) -> bool:
    """Noise-free visibility predicate: range, azimuth fov and occlusion.

    Shared by the detection model and the ground-truth scorer so the two
    agree on what "could have been seen" means.
    """
    delta = target.position - agent_pose.position
    if float(np.linalg.norm(delta)) > model.max_range:
        return False
    if model.azimuth_fov < 2.0 * math.pi - 1e-12:
        az = normalize_angle(math.atan2(delta[1], delta[0]) - agent_pose.yaw)
        if abs(az) > 0.5 * model.azimuth_fov + 1e-12:
            return False
    if (
        model.occlusion_enabled
        and agent_pose.position[2] < OCCLUSION_EXEMPT_HEIGHT
        and is_occluded(agent_pose, target, others)
    ):
        return False
    return True


def sense(
    agent_pose: Pose,
    model: SensorModel,
    truth: GroundTruthFrame,
    rng: np.random.Generator,
    *,
    agent_id: str,
) -> list[Detection]:
    """Simulate one frame of perception for one agent.

    A truth object yields a detection iff it is visible and a Bernoulli
    draw with ``detection_prob`` succeeds; detected centroids get zero-mean
    Gaussian position noise. Poisson clutter is placed area-uniformly in
    the field of view. Output is sorted by detection id.
    """
    frame_name = f"agent:{agent_id}"
    local_pose = ground_pose(agent_pose)
    R_meas = model.measurement_covariance()
    sigma = float(model.position_noise_std)
    t = truth.timestamp
    detections: list[Detection] = []
    n = 0
    for target in truth.objects:
        if not visible(agent_pose, model, target, truth.objects):
            continue
        if rng.random() >= model.detection_prob:
            continue
        noise = rng.normal(0.0, sigma, size=3) if sigma > 0 else np.zeros(3)
        local = state_to_local(target, local_pose, frame_name)
        centroid = ObjectState(
            position=local.position + noise,
            velocity=np.zeros(3),
            extent=target.extent,
            yaw=local.yaw,
            frame=frame_name,
            timestamp=t,
        )
        detections.append(
            Detection(
                centroid=centroid,
                measurement_noise=R_meas,
                source_agent=agent_id,
                timestamp=t,
                det_id=f"{agent_id}:{t:.3f}:{n:03d}",
            )
        )
        n += 1
    if model.clutter_rate > 0:
        k_clutter = int(rng.poisson(model.clutter_rate))
        for _ in range(k_clutter):
            rad = model.max_range * math.sqrt(rng.random())
            az = (rng.random() - 0.5) * model.azimuth_fov
            ground_z = -float(agent_pose.position[2])
            centroid = ObjectState(
                position=np.array([rad * math.cos(az), rad * math.sin(az), ground_z]),
                velocity=np.zeros(3),
                extent=np.asarray(_DEFAULT_EXTENT),
                yaw=0.0,
                frame=frame_name,
                timestamp=t,
            )
            detections.append(
                Detection(
                    centroid=centroid,
                    measurement_noise=R_meas,
                    source_agent=agent_id,
                    timestamp=t,
                    det_id=f"{agent_id}:{t:.3f}:{n:03d}",
                )
            )
            n += 1
    return detections


def save_frames(frames: list[GroundTruthFrame], path: str | Path) -> None:
    """Write a frame log, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            fh.write(json.dumps(frame.to_jsonable(), sort_keys=True) + "\n")


def load_frames(path: str | Path) -> list[GroundTruthFrame]:
    """Read a frame log written by :func:`save_frames` (or produced externally)."""
    frames = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                frames.append(GroundTruthFrame.from_jsonable(json.loads(line)))
    return frames
