"""Reference frames, poses, rigid transforms, and the shared state types.

Orientation is yaw/pitch/roll with the ZYX convention; the scenarios are
ground-plane dominated so the scalar ``yaw`` attribute of an object state
composes with the yaw of the frame it is expressed in. Timestamps are
logical simulation seconds (64-bit floats), never wall clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

WORLD = "world"
_TWO_PI = 2.0 * math.pi


class FrameError(KeyError):
    """A frame chain could not be resolved."""


class CovarianceError(ValueError):
    """A matrix violates the covariance contract (symmetry / PSD)."""


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(float(a), _TWO_PI)
    if a > math.pi:
        a -= _TWO_PI
    elif a <= -math.pi:
        a += _TWO_PI
    return a


def rotation_matrix(yaw: float, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    """ZYX rotation: Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def euler_from_rotation(R: np.ndarray) -> tuple[float, float, float]:
    """Recover (yaw, pitch, roll) from a ZYX rotation matrix."""
    sp = -float(R[2, 0])
    sp = max(-1.0, min(1.0, sp))
    pitch = math.asin(sp)
    if abs(sp) > 1.0 - 1e-12:
        # gimbal lock: fold roll into yaw
        yaw = math.atan2(-float(R[0, 1]), float(R[1, 1]))
        roll = 0.0
    else:
        yaw = math.atan2(float(R[1, 0]), float(R[0, 0]))
        roll = math.atan2(float(R[2, 1]), float(R[2, 2]))
    return normalize_angle(yaw), normalize_angle(pitch), normalize_angle(roll)


@dataclass(frozen=True, eq=False)
class Pose:
    """Pose of a frame origin expressed in a parent frame.

    Maps local coordinates into ``frame``: x_parent = R @ x_local + position.
    """

    position: np.ndarray
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    frame: str = WORLD
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))
        object.__setattr__(self, "pitch", normalize_angle(self.pitch))
        object.__setattr__(self, "roll", normalize_angle(self.roll))
        if not self.frame:
            raise FrameError("frame name must be non-empty")
        if self.timestamp < 0.0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")

    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.yaw, self.pitch, self.roll)

    def to_jsonable(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "yaw": float(self.yaw),
            "pitch": float(self.pitch),
            "roll": float(self.roll),
            "frame": self.frame,
            "timestamp": float(self.timestamp),
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "Pose":
        return cls(
            position=np.asarray(d["position"], dtype=float),
            yaw=d["yaw"],
            pitch=d["pitch"],
            roll=d["roll"],
            frame=d["frame"],
            timestamp=d["timestamp"],
        )


def identity_pose(frame: str = WORLD, timestamp: float = 0.0) -> Pose:
    return Pose(position=np.zeros(3), frame=frame, timestamp=timestamp)


def ground_pose(pose: Pose) -> Pose:
    """Yaw-only projection of a pose.

    Agent tracking frames are ground-aligned: sensor pitch shapes the
    vantage, not the frame detections and tracks are expressed in.
    """
    if pose.pitch == 0.0 and pose.roll == 0.0:
        return pose
    return Pose(
        position=pose.position,
        yaw=pose.yaw,
        frame=pose.frame,
        timestamp=pose.timestamp,
    )


def compose(a: Pose, b: Pose) -> Pose:
    """Chain two poses: if a maps B->A and b maps C->B, the result maps C->A.

    Frame bookkeeping for the child name is the caller's contract; graph
    based transforms enforce what is enforceable.
    """
    Ra, Rb = a.rotation(), b.rotation()
    R = Ra @ Rb
    t = Ra @ b.position + a.position
    yaw, pitch, roll = euler_from_rotation(R)
    return Pose(
        position=t,
        yaw=yaw,
        pitch=pitch,
        roll=roll,
        frame=a.frame,
        timestamp=max(a.timestamp, b.timestamp),
    )


def inverse(p: Pose) -> Pose:
    """Invert a pose (maps A->B if p maps B->A)."""
    R = p.rotation()
    yaw, pitch, roll = euler_from_rotation(R.T)
    return Pose(
        position=-(R.T @ p.position),
        yaw=yaw,
        pitch=pitch,
        roll=roll,
        frame=p.frame,
        timestamp=p.timestamp,
    )


@dataclass(frozen=True, eq=False)
class ObjectState:
    """Kinematic state of one object in a named frame at a timestamp."""

    position: np.ndarray
    velocity: np.ndarray
    extent: np.ndarray  # (length, width, height), meters
    yaw: float = 0.0
    frame: str = WORLD
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(3))
        object.__setattr__(self, "extent", np.asarray(self.extent, dtype=float).reshape(3))
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))
        if np.any(self.extent <= 0.0):
            raise ValueError(f"extent components must be > 0, got {self.extent}")

    def to_jsonable(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "velocity": [float(v) for v in self.velocity],
            "extent": [float(v) for v in self.extent],
            "yaw": float(self.yaw),
            "frame": self.frame,
            "timestamp": float(self.timestamp),
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "ObjectState":
        return cls(
            position=np.asarray(d["position"], dtype=float),
            velocity=np.asarray(d["velocity"], dtype=float),
            extent=np.asarray(d["extent"], dtype=float),
            yaw=d["yaw"],
            frame=d["frame"],
            timestamp=d["timestamp"],
        )


def state_to_parent(state: ObjectState, pose: Pose) -> ObjectState:
    """Express ``state`` in the parent frame of ``pose``.

    ``state.frame`` is assumed to be the local frame that ``pose`` defines.
    The scalar yaw attribute composes with the pose yaw only (BEV centric).
    """
    R = pose.rotation()
    return replace(
        state,
        position=R @ state.position + pose.position,
        velocity=R @ state.velocity,
        yaw=normalize_angle(state.yaw + pose.yaw),
        frame=pose.frame,
    )


def state_to_local(state: ObjectState, pose: Pose, local_frame: str) -> ObjectState:
    """Express ``state`` (given in ``pose.frame``) in the local frame of ``pose``."""
    if state.frame != pose.frame:
        raise FrameError(f"state is in {state.frame!r}, pose maps from {pose.frame!r}")
    R = pose.rotation()
    return replace(
        state,
        position=R.T @ (state.position - pose.position),
        velocity=R.T @ state.velocity,
        yaw=normalize_angle(state.yaw - pose.yaw),
        frame=local_frame,
    )


class FrameGraph:
    """Registry of frames, each defined by a pose in its parent frame."""

    def __init__(self) -> None:
        self._parents: dict[str, Pose | None] = {WORLD: None}

    def register(self, name: str, pose: Pose) -> None:
        if not name:
            raise FrameError("frame name must be non-empty")
        if name in self._parents:
            raise FrameError(f"frame {name!r} already registered")
        if pose.frame not in self._parents:
            raise FrameError(f"parent frame {pose.frame!r} not registered")
        self._parents[name] = pose

    def frames(self) -> list[str]:
        return sorted(self._parents)

    def pose_to_world(self, frame: str) -> Pose:
        if frame not in self._parents:
            raise FrameError(f"unknown frame {frame!r}")
        if frame == WORLD:
            return identity_pose(WORLD)
        pose: Pose | None = None
        cur = frame
        while cur != WORLD:
            parent_pose = self._parents[cur]
            assert parent_pose is not None
            pose = parent_pose if pose is None else compose(parent_pose, pose)
            cur = parent_pose.frame
        assert pose is not None
        return pose

    def transform_to(self, state: ObjectState, to_frame: str) -> ObjectState:
        """Re-express ``state`` in ``to_frame``; timestamp unchanged."""
        if state.frame not in self._parents:
            raise FrameError(f"unknown frame {state.frame!r}")
        if to_frame not in self._parents:
            raise FrameError(f"unknown frame {to_frame!r}")
        if state.frame == to_frame:
            return state
        world_state = state
        if state.frame != WORLD:
            world_state = state_to_parent(state, self.pose_to_world(state.frame))
        if to_frame == WORLD:
            return world_state
        return state_to_local(world_state, self.pose_to_world(to_frame), to_frame)


def check_covariance(P: np.ndarray, dim: int | None = None, *, sym_tol: float = 1e-9, eig_tol: float = 1e-9) -> np.ndarray:
    """Validate the covariance contract; returns P as a float array."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise CovarianceError(f"covariance must be square, got shape {P.shape}")
    if dim is not None and P.shape[0] != dim:
        raise CovarianceError(f"expected {dim}x{dim} covariance, got {P.shape}")
    if not np.all(np.isfinite(P)):
        raise CovarianceError("covariance has non-finite entries")
    if np.max(np.abs(P - P.T)) > sym_tol:
        raise CovarianceError("covariance is not symmetric within tolerance")
    eigvals = np.linalg.eigvalsh(0.5 * (P + P.T))
    if eigvals.min() < -eig_tol:
        raise CovarianceError(f"covariance not PSD (min eigenvalue {eigvals.min():.3e})")
    return P


def make_psd(P: np.ndarray) -> np.ndarray:
    """Symmetric projection with eigenvalue clipping."""
    S = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(S)
    w = np.clip(w, 0.0, None)
    return V @ np.diag(w) @ V.T
