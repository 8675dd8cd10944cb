import json
from pathlib import Path

from fusionsim.cli import main
from fusionsim.config import RunManifest
from fusionsim.scenario import ScenarioConfig


def write_small_manifest(path: Path, **overrides) -> Path:
    manifest = RunManifest(seed=3, scenario=ScenarioConfig(duration=4.0, object_count=6))
    data = json.loads(manifest.to_json())
    data.update(overrides)
    path.write_text(json.dumps(data))
    return path


def test_validate_ok(tmp_path, capsys):
    config = write_small_manifest(tmp_path / "m.json")
    assert main(["validate", "--config", str(config)]) == 0
    assert "manifest OK" in capsys.readouterr().out


def test_validate_bad_manifest_exit_2(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"seed": 1, "unknown_field": True}))
    assert main(["validate", "--config", str(config)]) == 2
    assert "manifest error" in capsys.readouterr().err


def test_validate_adversary_bound_exit_2(tmp_path):
    config = write_small_manifest(tmp_path / "m.json")
    assert main(["validate", "--config", str(config), "--adversaries", "9"]) == 2


def test_run_writes_artifacts(tmp_path):
    config = write_small_manifest(tmp_path / "m.json")
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    for name in ("metrics.csv", "metrics.json", "events.jsonl", "attack.jsonl", "table.md"):
        assert (out / name).exists()


def test_run_flag_overrides(tmp_path):
    config = write_small_manifest(tmp_path / "m.json")
    out = tmp_path / "out"
    code = main([
        "run", "--config", str(config), "--out", str(out),
        "--seed", "9", "--adversaries", "1",
    ])
    assert code == 0
    summary = json.loads((out / "metrics.json").read_text())
    assert summary["seed"] == 9
    assert summary["compromised"] == ["infra:0"]


def test_mc_writes_table(tmp_path):
    config = write_small_manifest(tmp_path / "m.json")
    out = tmp_path / "mc"
    code = main([
        "mc", "--config", str(config), "--out", str(out),
        "--seeds", "2", "--cells", "UC-1,C-1",
    ])
    assert code == 0
    assert (out / "table.md").exists()
    assert (out / "metrics.csv").exists()
    rows = json.loads((out / "metrics.json").read_text())
    assert {r["run_id"] for r in rows} == {"UC-1", "C-1"}


def test_mc_bad_cell_token_exit_2(tmp_path):
    config = write_small_manifest(tmp_path / "m.json")
    assert main(["mc", "--config", str(config), "--cells", "XX-9"]) == 2


def test_snapshot_verb(tmp_path):
    config = write_small_manifest(tmp_path / "m.json")
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    image = tmp_path / "snap.png"
    code = main([
        "snapshot", str(out), "--frame", "20", "--picture", "cc", "--out", str(image)
    ])
    assert code == 0
    assert image.exists()


def test_snapshot_out_of_range_exit_3(tmp_path):
    config = write_small_manifest(tmp_path / "m.json")
    out = tmp_path / "out"
    main(["run", "--config", str(config), "--out", str(out)])
    assert main(["snapshot", str(out), "--frame", "99999"]) == 3
