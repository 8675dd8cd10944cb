"""Ground-truth matching and increment-over-baseline statistics.

The per-agent truth set is the objects within a threshold distance of the
reference agent that are visible, noise-free, from at least one agent.
Estimates farther than the threshold from the reference agent are left
unevaluated, mirroring the visualization color key's "no attempt" class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import assign_points
from .geometry import ObjectState, Pose
from .scenario import GroundTruthFrame, ScenarioConfig, visible

DEFAULT_TRUTH_DISTANCE = 50.0
DEFAULT_MATCH_RADIUS = 2.0


class PairingError(ValueError):
    """Increment metrics requested for runs that are not seed-paired."""


@dataclass(frozen=True, eq=False)
class TruthSet:
    """Evaluation population relative to one reference agent."""

    reference_agent: str
    timestamp: float
    objects: tuple[ObjectState, ...]


@dataclass(frozen=True)
class FrameOutcome:
    """TP/FP/FN counts for one picture against one truth set."""

    tp: int
    fp: int
    fn: int
    matched_pairs: tuple[tuple[int, int], ...] = ()
    unevaluated: int = 0


def visibility_matrix(frame: GroundTruthFrame, cfg: ScenarioConfig) -> dict[str, list[bool]]:
    """Noise-free visibility of every truth object from every agent."""
    out: dict[str, list[bool]] = {}
    for agent, pose in frame.agent_poses.items():
        model = cfg.sensor_for(agent)
        out[agent] = [visible(pose, model, obj, frame.objects) for obj in frame.objects]
    return out


def build_truth_set(
    frame: GroundTruthFrame,
    reference_agent: str,
    cfg: ScenarioConfig,
    threshold: float = DEFAULT_TRUTH_DISTANCE,
    vis: dict[str, list[bool]] | None = None,
) -> TruthSet:
    """Objects near the reference agent that at least one agent could see."""
    vis = vis if vis is not None else visibility_matrix(frame, cfg)
    ref_xy = frame.agent_poses[reference_agent].position[:2]
    objects = []
    for i, obj in enumerate(frame.objects):
        if np.hypot(*(obj.position[:2] - ref_xy)) > threshold:
            continue
        if not any(vis[a][i] for a in vis):
            continue
        objects.append(obj)
    return TruthSet(reference_agent=reference_agent, timestamp=frame.timestamp, objects=tuple(objects))


def match_truth(
    estimate_positions: np.ndarray | list,
    truth: TruthSet,
    radius: float = DEFAULT_MATCH_RADIUS,
    *,
    reference_xy: np.ndarray | None = None,
    threshold: float = DEFAULT_TRUTH_DISTANCE,
) -> FrameOutcome:
    """One-to-one gated assignment of estimates to the truth set.

    Positions are compared in the ground plane. When ``reference_xy`` is
    given, estimates beyond ``threshold`` of it are excluded from
    evaluation (counted as unevaluated, not as false positives).
    """
    est = np.asarray(estimate_positions, dtype=float).reshape(-1, 3)[:, :2]
    unevaluated = 0
    if reference_xy is not None and len(est):
        ref = np.asarray(reference_xy, dtype=float)
        keep = np.hypot(est[:, 0] - ref[0], est[:, 1] - ref[1]) <= threshold
        unevaluated = int(np.sum(~keep))
        est = est[keep]
    truth_xy = np.array([o.position[:2] for o in truth.objects]).reshape(-1, 2)
    pairs, unmatched_truth, unmatched_est = assign_points(truth_xy, est, radius)
    return FrameOutcome(
        tp=len(pairs),
        fp=len(unmatched_est),
        fn=len(unmatched_truth),
        matched_pairs=tuple(pairs),
        unevaluated=unevaluated,
    )


@dataclass(frozen=True)
class FrameRow:
    """Per-frame counts for one run (the delimited-output row)."""

    frame: int
    t: float
    counts: dict[str, int]


@dataclass(frozen=True)
class RunRecord:
    """Everything the metric layer needs from one finished run."""

    seed: int
    coordinated: bool
    n_adversaries: int
    compromised: tuple[str, ...]
    agents: tuple[str, ...]
    rows: tuple[FrameRow, ...]


# Metric vocabulary: counts per frame are stored under these keys.
EGO_KEYS = ("ego_tp", "ego_fp", "ego_fn")
CC_KEYS = ("cc_tp", "cc_fp", "cc_fn")


def agent_keys(agent: str) -> tuple[str, str, str]:
    """Count keys for an agent's outgoing (post-interception) track stream."""
    return (f"pub_{agent}_tp", f"pub_{agent}_fp", f"pub_{agent}_fn")


def evaluate_run_frames(
    frames: list[GroundTruthFrame],
    ego_pictures: list[list[np.ndarray]],
    cc_pictures: list[list[np.ndarray]],
    published: list[dict[str, list[np.ndarray]]],
    cfg: ScenarioConfig,
    threshold: float = DEFAULT_TRUTH_DISTANCE,
    radius: float = DEFAULT_MATCH_RADIUS,
) -> list[FrameRow]:
    """Score every frame of a run against ground truth.

    ``ego_pictures`` and ``cc_pictures`` hold world-frame positions of the
    ego's local picture and its received command-center picture;
    ``published`` holds each agent's outgoing (post-interception) track
    positions, which is what the per-agent compromise metrics count.
    """
    rows: list[FrameRow] = []
    for k, frame in enumerate(frames):
        vis = visibility_matrix(frame, cfg)
        counts: dict[str, int] = {}
        ego_xy = frame.agent_poses["ego"].position[:2]
        ego_truth = build_truth_set(frame, "ego", cfg, threshold, vis)
        counts["truth_ego"] = len(ego_truth.objects)
        ego_out = match_truth(
            ego_pictures[k], ego_truth, radius, reference_xy=ego_xy, threshold=threshold
        )
        cc_out = match_truth(
            cc_pictures[k], ego_truth, radius, reference_xy=ego_xy, threshold=threshold
        )
        counts.update(ego_tp=ego_out.tp, ego_fp=ego_out.fp, ego_fn=ego_out.fn)
        counts.update(cc_tp=cc_out.tp, cc_fp=cc_out.fp, cc_fn=cc_out.fn)
        for agent in sorted(frame.agent_poses):
            truth_a = build_truth_set(frame, agent, cfg, threshold, vis)
            agent_xy = frame.agent_poses[agent].position[:2]
            out = match_truth(
                published[k].get(agent, []),
                truth_a,
                radius,
                reference_xy=agent_xy,
                threshold=threshold,
            )
            tp_k, fp_k, fn_k = agent_keys(agent)
            counts[f"truth_{agent}"] = len(truth_a.objects)
            counts[tp_k] = out.tp
            counts[fp_k] = out.fp
            counts[fn_k] = out.fn
        rows.append(FrameRow(frame=k, t=frame.timestamp, counts=counts))
    return rows


def _series(record: RunRecord, key: str) -> np.ndarray:
    return np.array([row.counts.get(key, 0) for row in record.rows], dtype=float)


def _mean_std(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return 0.0, 0.0
    return float(np.mean(values)), float(np.std(values))


@dataclass(frozen=True)
class MetricsRecord:
    """Per-run increment statistics (frame mean and std per metric)."""

    run_id: str
    coordinated: bool
    n_adversaries: int
    metrics: dict[str, tuple[float, float]]


def increment_frames(attacked: RunRecord, baseline: RunRecord) -> dict[str, np.ndarray]:
    """Per-frame increment series for the paired runs."""
    if attacked.seed != baseline.seed:
        raise PairingError(
            f"runs are not paired: seeds {attacked.seed} vs {baseline.seed}"
        )
    if len(attacked.rows) != len(baseline.rows):
        raise PairingError("paired runs have different frame counts")
    series: dict[str, np.ndarray] = {}
    for name, key in (("ERCCFP", "cc_fp"), ("ERCCFN", "cc_fn"), ("ERCCTP", "cc_tp")):
        series[f"{name}IoB"] = _series(attacked, key) - _series(baseline, key)
    for name, cc_key, ego_key in (
        ("ERCCFP", "cc_fp", "ego_fp"),
        ("ERCCFN", "cc_fn", "ego_fn"),
        ("ERCCTP", "cc_tp", "ego_tp"),
    ):
        series[f"{name}IoE"] = _series(attacked, cc_key) - _series(attacked, ego_key)
    for agent in attacked.compromised:
        _, fp_k, fn_k = agent_keys(agent)
        series[f"CAFPIoB_{agent}"] = _series(attacked, fp_k) - _series(baseline, fp_k)
        series[f"CAFNIoB_{agent}"] = _series(attacked, fn_k) - _series(baseline, fn_k)
    return series


def increment_metrics(
    attacked: RunRecord, baseline: RunRecord, run_id: str | None = None
) -> MetricsRecord:
    """Aggregate the per-frame increments into mean +/- std over frames."""
    series = increment_frames(attacked, baseline)
    prefix = "C" if attacked.coordinated else "UC"
    return MetricsRecord(
        run_id=run_id or f"{prefix}-{attacked.n_adversaries}",
        coordinated=attacked.coordinated,
        n_adversaries=attacked.n_adversaries,
        metrics={name: _mean_std(values) for name, values in sorted(series.items())},
    )


def summarize_run(record: RunRecord) -> dict[str, tuple[float, float]]:
    """Mean +/- std of the raw per-frame counts of one run."""
    keys = sorted({k for row in record.rows for k in row.counts})
    summary = {key: _mean_std(_series(record, key)) for key in keys}
    summary["ERCCFPIoE"] = _mean_std(_series(record, "cc_fp") - _series(record, "ego_fp"))
    summary["ERCCFNIoE"] = _mean_std(_series(record, "cc_fn") - _series(record, "ego_fn"))
    summary["ERCCTPIoE"] = _mean_std(_series(record, "cc_tp") - _series(record, "ego_tp"))
    return summary
