from dataclasses import replace

from fusionsim.config import RunManifest
from fusionsim.montecarlo import (
    CellSpec,
    default_grid,
    render_markdown_table,
    run_monte_carlo,
    write_mc_outputs,
)
from fusionsim.scenario import ScenarioConfig


def tiny_manifest():
    return RunManifest(seed=50, scenario=ScenarioConfig(duration=4.0, object_count=6))


def test_zero_adversary_cell_is_all_zeros():
    rows = run_monte_carlo(
        tiny_manifest(), cells=[CellSpec(False, 0)], seeds=[50]
    )
    assert len(rows) == 1
    row = rows[0]
    assert row.run_id == "UC-0"
    for key, (mean, std) in row.metrics.items():
        if key.endswith("IoB"):
            assert mean == 0.0 and std == 0.0, key


def test_grid_shape_contract():
    rows = run_monte_carlo(
        tiny_manifest(),
        cells=[CellSpec(True, 1), CellSpec(False, 1)],
        seeds=[50, 51],
    )
    assert [r.run_id for r in rows] == ["C-1", "UC-1"]
    for row in rows:
        assert row.n_seeds == 2
        for column in ("ERCCFPIoB", "ERCCFNIoB", "ERCCTPIoB",
                       "ERCCFPIoE", "ERCCFNIoE", "ERCCTPIoE"):
            assert column in row.metrics
        assert f"CAFPIoB_infra:0" in row.metrics
        assert not row.failures


def test_default_grid_covers_both_models():
    grid = default_grid()
    assert len(grid) == 6
    assert {(c.coordinated, c.n_adversaries) for c in grid} == {
        (True, 1), (True, 2), (True, 3), (False, 1), (False, 2), (False, 3)
    }


def test_worker_pool_matches_serial():
    manifest = tiny_manifest()
    cells = [CellSpec(False, 1)]
    serial = run_monte_carlo(manifest, cells=cells, seeds=[50, 51])
    pooled = run_monte_carlo(manifest, cells=cells, seeds=[50, 51], workers=2)
    assert serial[0].metrics == pooled[0].metrics


def test_markdown_table_layout(tmp_path):
    rows = run_monte_carlo(tiny_manifest(), cells=[CellSpec(False, 1)], seeds=[50])
    text = render_markdown_table(rows)
    assert "| Run ID | Coord? | # Adv |" in text
    assert "ERCCFPIoB" in text and "CAFPIoB_infra:0" in text
    assert "UC-1" in text
    write_mc_outputs(rows, tmp_path)
    assert (tmp_path / "table.md").exists()
    assert (tmp_path / "metrics.csv").exists()
    assert (tmp_path / "metrics.json").exists()
