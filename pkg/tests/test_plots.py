import json
from dataclasses import replace

import pytest

from fusionsim.adversary import AdversaryParams
from fusionsim.config import RunManifest
from fusionsim.metrics import FrameOutcome
from fusionsim.plots import COLOR_KEY, ExportError, export_snapshot, render_snapshot
from fusionsim.runner import launch
from fusionsim.scenario import ScenarioConfig


def small_run(tmp_path, **adversary_kwargs):
    adversary = AdversaryParams(**adversary_kwargs) if adversary_kwargs else AdversaryParams()
    manifest = RunManifest(
        seed=5,
        scenario=ScenarioConfig(duration=6.0, object_count=8),
        adversary=adversary,
    )
    out = tmp_path / "run"
    launch(manifest, out_dir=out)
    return out


def test_color_key_order_matches_convention():
    names = [c for c, _ in COLOR_KEY]
    assert names == ["white", "tab:blue", "gold", "red", "limegreen"]


def test_render_is_deterministic(tmp_path):
    truth = [{"p": [0.0, 0.0, 0.0], "yaw": 0.0, "extent": [4.5, 1.8, 1.5]},
             {"p": [10.0, 5.0, 0.0], "yaw": 0.5, "extent": [4.5, 1.8, 1.5]}]
    est = [{"p": [0.1, 0.0, 0.0], "yaw": 0.0, "extent": [4.5, 1.8, 1.5]},
           {"p": [30.0, -20.0, 0.0], "yaw": 0.0, "extent": [4.5, 1.8, 1.5]}]
    outcome = FrameOutcome(tp=1, fp=1, fn=1, matched_pairs=((0, 0),))
    poses = {"ego": {"position": [0.0, -10.0, 1.7], "yaw": 0.0, "pitch": 0.0, "roll": 0.0,
                     "frame": "world", "timestamp": 0.0}}
    a = render_snapshot(truth, est, outcome, [0, 1], [0, 1], poses, tmp_path / "a.png")
    b = render_snapshot(truth, est, outcome, [0, 1], [0, 1], poses, tmp_path / "b.png")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_unattacked_steady_frame_has_no_false_positives(tmp_path):
    out = small_run(tmp_path)
    pictures = [json.loads(line) for line in (out / "pictures.jsonl").read_text().splitlines()]
    metrics_rows = (out / "metrics.csv").read_text().splitlines()
    header = metrics_rows[0].split(",")
    fp_idx = header.index("cc_fp")
    last = metrics_rows[-1].split(",")
    assert int(last[fp_idx]) == 0  # steady state, no attack: no red boxes
    path = export_snapshot(out, len(pictures) - 1, "cc")
    assert path.exists() and path.stat().st_size > 0


def test_attacked_frame_renders(tmp_path):
    out = small_run(tmp_path, n_compromised=1, fp_poisson_lambda=8.0, fn_fraction=0.0)
    path = export_snapshot(out, 55, "cc", tmp_path / "attacked.png")
    assert path.exists()
    rows = (out / "metrics.csv").read_text().splitlines()
    header = rows[0].split(",")
    fp_idx = header.index("cc_fp")
    assert int(rows[-1].split(",")[fp_idx]) >= 1  # injected fakes show as FP


def test_export_frame_out_of_range(tmp_path):
    out = small_run(tmp_path)
    with pytest.raises(ExportError):
        export_snapshot(out, 10_000, "cc")
    with pytest.raises(ExportError):
        export_snapshot(out, 0, "lidar")
