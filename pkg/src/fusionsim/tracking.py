"""Per-agent multi-object tracking.

Constant-velocity Kalman filtering over a 6D state (position, velocity)
with position-only measurements, gated global-nearest-neighbor assignment,
and hit/miss lifecycle management. The measurement model is linear here,
so the classic filter is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import assign_points
from .geometry import WORLD, make_psd, normalize_angle
from .scenario import Detection

_H = np.hstack([np.eye(3), np.zeros((3, 3))])


class TemporalOrderError(ValueError):
    """Prediction or update requested for a time before the track's state."""


@dataclass(frozen=True)
class TrackerConfig:
    gate_distance: float = 4.0
    confirm_hits: int = 3
    delete_misses: int = 3
    process_noise_std: float = 1.0
    initial_velocity_std: float = 10.0

    def __post_init__(self) -> None:
        if self.gate_distance <= 0:
            raise ValueError("gate_distance must be > 0")
        if self.confirm_hits < 1:
            raise ValueError("confirm_hits must be >= 1")
        if self.delete_misses < 1:
            raise ValueError("delete_misses must be >= 1")

    def to_jsonable(self) -> dict:
        return {
            "gate_distance": self.gate_distance,
            "confirm_hits": self.confirm_hits,
            "delete_misses": self.delete_misses,
            "process_noise_std": self.process_noise_std,
            "initial_velocity_std": self.initial_velocity_std,
        }


@dataclass(eq=False)
class Track:
    """Longitudinal estimate of one object, owned by one agent."""

    id: int
    mean: np.ndarray  # (6,) position then velocity
    covariance: np.ndarray  # (6, 6)
    extent: np.ndarray
    yaw: float
    hits: int
    misses_in_a_row: int
    confirmed: bool
    last_update: float
    owner: str
    frame: str

    @property
    def position(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[3:]

    def copy(self) -> "Track":
        return Track(
            id=self.id,
            mean=self.mean.copy(),
            covariance=self.covariance.copy(),
            extent=self.extent.copy(),
            yaw=self.yaw,
            hits=self.hits,
            misses_in_a_row=self.misses_in_a_row,
            confirmed=self.confirmed,
            last_update=self.last_update,
            owner=self.owner,
            frame=self.frame,
        )

    def to_jsonable(self) -> dict:
        return {
            "id": self.id,
            "mean": [float(v) for v in self.mean],
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "extent": [float(v) for v in self.extent],
            "yaw": float(self.yaw),
            "hits": self.hits,
            "misses_in_a_row": self.misses_in_a_row,
            "confirmed": self.confirmed,
            "last_update": float(self.last_update),
            "owner": self.owner,
            "frame": self.frame,
        }


def cv_matrices(dt: float, process_noise_std: float) -> tuple[np.ndarray, np.ndarray]:
    """Transition and process-noise matrices of the constant-velocity model."""
    F = np.eye(6)
    F[0, 3] = F[1, 4] = F[2, 5] = dt
    q = process_noise_std**2
    dt2, dt3, dt4 = dt * dt, dt**3, dt**4
    Q = np.zeros((6, 6))
    Q[:3, :3] = np.eye(3) * (q * dt4 / 4.0)
    Q[:3, 3:] = Q[3:, :3] = np.eye(3) * (q * dt3 / 2.0)
    Q[3:, 3:] = np.eye(3) * (q * dt2)
    return F, Q


def kalman_predict(
    mean: np.ndarray, cov: np.ndarray, dt: float, process_noise_std: float
) -> tuple[np.ndarray, np.ndarray]:
    F, Q = cv_matrices(dt, process_noise_std)
    return F @ mean, F @ cov @ F.T + Q


def kalman_update(
    mean: np.ndarray, cov: np.ndarray, z: np.ndarray, H: np.ndarray, R: np.ndarray
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Measurement update in Joseph form.

    Returns (mean, cov, repaired); ``repaired`` is set when the posterior
    needed a symmetric PSD projection.
    """
    S = H @ cov @ H.T + R
    K = cov @ H.T @ np.linalg.inv(S)
    innovation = z - H @ mean
    new_mean = mean + K @ innovation
    I_KH = np.eye(cov.shape[0]) - K @ H
    new_cov = I_KH @ cov @ I_KH.T + K @ R @ K.T
    new_cov = 0.5 * (new_cov + new_cov.T)
    repaired = False
    if not np.all(np.isfinite(new_cov)) or np.any(np.diag(new_cov) < 0.0):
        new_cov = make_psd(np.nan_to_num(new_cov))
        repaired = True
    return new_mean, new_cov, repaired


def predict_track(track: Track, to_time: float, process_noise_std: float) -> Track:
    """Constant-velocity propagation of one track to ``to_time``."""
    dt = to_time - track.last_update
    if dt < -1e-9:
        raise TemporalOrderError(
            f"cannot predict track {track.id} backwards ({track.last_update} -> {to_time})"
        )
    dt = max(dt, 0.0)
    mean, cov = kalman_predict(track.mean, track.covariance, dt, process_noise_std)
    out = track.copy()
    out.mean = mean
    out.covariance = cov
    out.last_update = to_time
    return out


def update_track(track: Track, det: Detection) -> tuple[Track, bool]:
    """Fold one gated detection into a track; extent and yaw are carried over."""
    mean, cov, repaired = kalman_update(
        track.mean,
        track.covariance,
        det.centroid.position,
        _H,
        np.asarray(det.measurement_noise, dtype=float),
    )
    out = track.copy()
    out.mean = mean
    out.covariance = cov
    out.extent = np.asarray(det.centroid.extent, dtype=float).copy()
    out.yaw = det.centroid.yaw
    out.hits = track.hits + 1
    out.misses_in_a_row = 0
    return out, repaired


def transform_track(track: Track, pose) -> Track:
    """Re-express a track in the parent frame of ``pose`` (usually world)."""
    R = pose.rotation()
    R6 = np.zeros((6, 6))
    R6[:3, :3] = R
    R6[3:, 3:] = R
    out = track.copy()
    out.mean = np.concatenate([R @ track.position + pose.position, R @ track.velocity])
    out.covariance = R6 @ track.covariance @ R6.T
    out.yaw = normalize_angle(track.yaw + pose.yaw)
    out.frame = pose.frame
    return out


class MultiObjectTracker:
    """Assignment + Kalman tracker with hit/miss confirmation lifecycle."""

    def __init__(self, config: TrackerConfig, owner: str, frame: str = WORLD):
        self.config = config
        self.owner = owner
        self.frame = frame
        self.tracks: list[Track] = []
        self.covariance_repairs = 0
        self._next_id = 0

    def _spawn(self, det: Detection, now: float) -> Track:
        mean = np.concatenate([np.asarray(det.centroid.position, dtype=float), np.zeros(3)])
        cov = np.zeros((6, 6))
        cov[:3, :3] = np.asarray(det.measurement_noise, dtype=float)
        cov[3:, 3:] = np.eye(3) * self.config.initial_velocity_std**2
        track = Track(
            id=self._next_id,
            mean=mean,
            covariance=cov,
            extent=np.asarray(det.centroid.extent, dtype=float).copy(),
            yaw=det.centroid.yaw,
            hits=1,
            misses_in_a_row=0,
            confirmed=self.config.confirm_hits <= 1,
            last_update=now,
            owner=self.owner,
            frame=self.frame,
        )
        self._next_id += 1
        return track

    def step(self, detections: list[Detection], now: float) -> list[Track]:
        """Run one tracker cycle and return copies of the confirmed tracks.

        Order: predict all, assign within the gate, update matched,
        age out unmatched tracks, spawn tentatives from unmatched
        detections.
        """
        for det in detections:
            if det.timestamp > now + 1e-9:
                raise TemporalOrderError(
                    f"detection stamped {det.timestamp} is ahead of tracker time {now}"
                )
        self.tracks = [
            predict_track(t, now, self.config.process_noise_std) for t in self.tracks
        ]
        track_pos = np.array([t.position for t in self.tracks]).reshape(len(self.tracks), 3)
        det_pos = np.array([d.centroid.position for d in detections]).reshape(
            len(detections), 3
        )
        pairs, unmatched_tracks, unmatched_dets = assign_points(
            track_pos, det_pos, self.config.gate_distance
        )

        survivors: dict[int, Track] = {}
        for ti, di in pairs:
            updated, repaired = update_track(self.tracks[ti], detections[di])
            if repaired:
                self.covariance_repairs += 1
            if updated.hits >= self.config.confirm_hits:
                updated.confirmed = True
            survivors[ti] = updated
        for ti in unmatched_tracks:
            track = self.tracks[ti]
            track.misses_in_a_row += 1
            if track.misses_in_a_row < self.config.delete_misses:
                survivors[ti] = track
        new_tracks = [survivors[i] for i in sorted(survivors)]
        for di in unmatched_dets:
            new_tracks.append(self._spawn(detections[di], now))
        self.tracks = new_tracks
        return [t.copy() for t in self.tracks if t.confirmed]
