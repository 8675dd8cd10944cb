"""Snapshot rendering: BEV rasters of one frame with the evaluation color key.

Color semantics match the analysis convention: white boxes are matched
ground truth (each pairs with a blue matched estimate), yellow is a missed
truth object (false negative), red an unmatched estimate (false positive),
and green anything left out of the evaluation.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Patch, Polygon

from .metrics import FrameOutcome, TruthSet, build_truth_set, match_truth
from .scenario import GroundTruthFrame, ScenarioConfig

COLOR_KEY = (
    ("white", "ground truth matched by an estimate (true positive)"),
    ("tab:blue", "estimate matched by ground truth (true positive)"),
    ("gold", "ground truth lacking an estimate (false negative)"),
    ("red", "estimate lacking ground truth (false positive)"),
    ("limegreen", "state not evaluated"),
)

_DPI = 110


class ExportError(ValueError):
    """Snapshot requested for a frame outside the run."""


def _box_corners(xy: np.ndarray, extent, yaw: float) -> np.ndarray:
    half_l, half_w = 0.5 * float(extent[0]), 0.5 * float(extent[1])
    c, s = math.cos(yaw), math.sin(yaw)
    local = np.array(
        [[half_l, half_w], [half_l, -half_w], [-half_l, -half_w], [-half_l, half_w]]
    )
    R = np.array([[c, -s], [s, c]])
    return local @ R.T + xy


def _draw_box(ax, xy, extent, yaw, color, lw=1.3) -> None:
    ax.add_patch(
        Polygon(
            _box_corners(np.asarray(xy, dtype=float), extent, yaw),
            closed=True,
            fill=False,
            edgecolor=color,
            linewidth=lw,
        )
    )


def render_snapshot(
    truth_objects: list[dict],
    estimates: list[dict],
    outcome: FrameOutcome,
    truth_eval_indices: list[int],
    est_eval_indices: list[int],
    agent_poses: dict[str, dict],
    path: str | Path,
    *,
    title: str = "",
    map_extent: float = 80.0,
) -> Path:
    """Render one BEV frame to a PNG; deterministic for fixed inputs.

    ``truth_objects`` and ``estimates`` are item dicts with keys
    ``p`` (xyz), ``yaw``, ``extent``; the eval index lists say which items
    took part in the evaluation (everything else renders green).
    """
    fig, ax = plt.subplots(figsize=(7.2, 7.2), dpi=_DPI)
    ax.set_facecolor("#101014")

    matched_truth = {ti for ti, _ in outcome.matched_pairs}
    matched_est = {ei for _, ei in outcome.matched_pairs}

    for i, obj in enumerate(truth_objects):
        if i not in truth_eval_indices:
            color = "limegreen"
        else:
            local = truth_eval_indices.index(i)
            color = "white" if local in matched_truth else "gold"
        _draw_box(ax, obj["p"][:2], obj["extent"], obj["yaw"], color)

    for j, est in enumerate(estimates):
        if j not in est_eval_indices:
            color = "limegreen"
        else:
            local = est_eval_indices.index(j)
            color = "tab:blue" if local in matched_est else "red"
        _draw_box(ax, est["p"][:2], est["extent"], est["yaw"], color, lw=1.0)

    for agent in sorted(agent_poses):
        pose = agent_poses[agent]
        x, y = pose["position"][0], pose["position"][1]
        ax.plot(
            [x],
            [y],
            marker="^",
            markersize=9,
            color="orange",
            markeredgecolor="black",
            linestyle="none",
        )
        ax.annotate(agent, (x, y), xytext=(4, 4), textcoords="offset points",
                    color="orange", fontsize=8)

    half = 0.62 * map_extent
    ax.set_xlim(-half, half)
    ax.set_ylim(-half, half)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(
        handles=[Patch(facecolor="none", edgecolor=c, label=label) for c, label in COLOR_KEY],
        loc="upper left",
        fontsize=7,
        framealpha=0.85,
    )
    out = Path(path)
    fig.savefig(out, dpi=_DPI, facecolor="#1c1c22")
    plt.close(fig)
    return out


def _load_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def export_snapshot(
    run_dir: str | Path,
    frame_index: int,
    picture: str = "cc",
    out_path: str | Path | None = None,
) -> Path:
    """Re-evaluate one logged frame of a finished run and render it."""
    run_path = Path(run_dir)
    config = json.loads((run_path / "run_config.json").read_text(encoding="utf-8"))
    frames = _load_jsonl(run_path / "frames.jsonl")
    pictures = _load_jsonl(run_path / "pictures.jsonl")
    if not (0 <= frame_index < len(frames)):
        raise ExportError(
            f"frame {frame_index} out of range (run has {len(frames)} frames)"
        )
    if picture not in ("ego", "cc"):
        raise ExportError(f"picture must be 'ego' or 'cc', got {picture!r}")

    from .config import _scenario_from_dict  # shared strict parser

    cfg = _scenario_from_dict(config["scenario"], "$.scenario")
    frame = GroundTruthFrame.from_jsonable(frames[frame_index])
    entry = pictures[frame_index]
    items = entry["ego_local"] if picture == "ego" else entry["cc"]

    threshold = float(config["truth_distance"])
    radius = float(config["match_radius"])
    truth_set = build_truth_set(frame, "ego", cfg, threshold)
    truth_ids = {id(o) for o in truth_set.objects}
    truth_eval_indices = [i for i, o in enumerate(frame.objects) if id(o) in truth_ids]

    positions = np.array([item["p"] for item in items]).reshape(-1, 3)
    ego_xy = frame.agent_poses["ego"].position[:2]
    est_eval_indices = [
        j
        for j in range(len(items))
        if np.hypot(positions[j, 0] - ego_xy[0], positions[j, 1] - ego_xy[1]) <= threshold
    ]
    eval_positions = positions[est_eval_indices] if len(items) else positions
    outcome = match_truth(eval_positions.reshape(-1, 3), truth_set, radius)

    if out_path is None:
        out_path = run_path / "snapshots" / f"frame_{frame_index:05d}_{picture}.png"
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    truth_items = [
        {"p": list(o.position), "yaw": o.yaw, "extent": list(o.extent)} for o in frame.objects
    ]
    agent_poses = {a: p.to_jsonable() for a, p in frame.agent_poses.items()}
    return render_snapshot(
        truth_items,
        items,
        outcome,
        truth_eval_indices,
        est_eval_indices,
        agent_poses,
        out_path,
        title=f"frame {frame_index} ({picture} picture) t={entry['t']:.1f}s",
        map_extent=cfg.map_extent,
    )


def render_run_frame(result, manifest, frame_index: int, picture: str, out_path: Path) -> Path:
    """Render directly from an in-memory run result (used by the runner)."""
    frame = result.frames[frame_index]
    entry = result.picture_log[frame_index]
    items = entry["ego_local"] if picture == "ego" else entry["cc"]
    cfg = manifest.scenario
    threshold = manifest.truth_distance
    truth_set = build_truth_set(frame, "ego", cfg, threshold)
    truth_ids = {id(o) for o in truth_set.objects}
    truth_eval_indices = [i for i, o in enumerate(frame.objects) if id(o) in truth_ids]
    positions = np.array([item["p"] for item in items]).reshape(-1, 3)
    ego_xy = frame.agent_poses["ego"].position[:2]
    est_eval_indices = [
        j
        for j in range(len(items))
        if np.hypot(positions[j, 0] - ego_xy[0], positions[j, 1] - ego_xy[1]) <= threshold
    ]
    outcome = match_truth(
        positions[est_eval_indices].reshape(-1, 3), truth_set, manifest.match_radius
    )
    truth_items = [
        {"p": list(o.position), "yaw": o.yaw, "extent": list(o.extent)} for o in frame.objects
    ]
    agent_poses = {a: p.to_jsonable() for a, p in frame.agent_poses.items()}
    return render_snapshot(
        truth_items,
        items,
        outcome,
        truth_eval_indices,
        est_eval_indices,
        agent_poses,
        out_path,
        title=f"frame {frame_index} ({picture} picture) t={entry['t']:.1f}s",
        map_extent=cfg.map_extent,
    )
