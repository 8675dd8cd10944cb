"""Payload types carried on the bus."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import Pose
from .scenario import Detection
from .tracking import Track


@dataclass(frozen=True, eq=False)
class DetectionBatch:
    """One frame of detections from one agent, with the sensing pose."""

    agent_id: str
    pose: Pose
    detections: tuple[Detection, ...]

    def to_jsonable(self) -> dict:
        return {
            "kind": "detections",
            "agent_id": self.agent_id,
            "pose": self.pose.to_jsonable(),
            "detections": [d.to_jsonable() for d in self.detections],
        }


@dataclass(frozen=True, eq=False)
class TrackBatch:
    """Confirmed tracks from one agent in its own frame, with the pose."""

    agent_id: str
    pose: Pose
    tracks: tuple[Track, ...]
    timestamp: float

    def to_jsonable(self) -> dict:
        return {
            "kind": "tracks",
            "agent_id": self.agent_id,
            "pose": self.pose.to_jsonable(),
            "tracks": [t.to_jsonable() for t in self.tracks],
            "timestamp": float(self.timestamp),
        }


@dataclass(frozen=True)
class StatusMsg:
    agent_id: str

    def to_jsonable(self) -> dict:
        return {"kind": "status", "agent_id": self.agent_id}


@dataclass(frozen=True, eq=False)
class CCTracks:
    """The command center's unified picture, world frame."""

    tracks: tuple[Track, ...]
    cycle_time: float

    def to_jsonable(self) -> dict:
        return {
            "kind": "cc_tracks",
            "cycle_time": float(self.cycle_time),
            "tracks": [t.to_jsonable() for t in self.tracks],
        }


@dataclass(frozen=True, eq=False)
class AdversaryReport:
    """Uncompromised host data an adversary forwards to its coordinator."""

    adversary_id: str
    agent_id: str
    pose: Pose
    tracks: tuple[Track, ...]
    timestamp: float

    def to_jsonable(self) -> dict:
        return {
            "kind": "report",
            "adversary_id": self.adversary_id,
            "agent_id": self.agent_id,
            "pose": self.pose.to_jsonable(),
            "tracks": [t.to_jsonable() for t in self.tracks],
            "timestamp": float(self.timestamp),
        }
