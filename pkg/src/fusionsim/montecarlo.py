"""Monte Carlo harness sweeping attack type and adversary count.

Each grid cell pairs an attacked run with the unattacked baseline of the
same seed (identical natural noise), computes increment metrics, and the
rows aggregate per-seed frame means into mean +/- std across seeds. Cells
are independent deterministic simulations, so they parallelize trivially.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .adversary import AdversaryParams
from .config import RunManifest, baseline_of
from .metrics import MetricsRecord, RunRecord, increment_metrics
from .runner import launch


@dataclass(frozen=True)
class CellSpec:
    coordinated: bool
    n_adversaries: int

    @property
    def run_id(self) -> str:
        return f"{'C' if self.coordinated else 'UC'}-{self.n_adversaries}"


@dataclass(frozen=True)
class MCRow:
    """One results-table row: a cell aggregated over seeds."""

    run_id: str
    coordinated: bool
    n_adversaries: int
    metrics: dict[str, tuple[float, float]]
    n_seeds: int
    failures: tuple[str, ...] = ()


def default_grid() -> list[CellSpec]:
    return [CellSpec(True, k) for k in (1, 2, 3)] + [CellSpec(False, k) for k in (1, 2, 3)]


def _cell_manifest(base: RunManifest, cell: CellSpec, seed: int) -> RunManifest:
    params = replace(
        base.adversary,
        n_compromised=cell.n_adversaries,
        coordinated=cell.coordinated,
    )
    return replace(base, seed=seed, adversary=params, out_dir=None)


def _run_record(manifest: RunManifest) -> RunRecord:
    return launch(manifest, log_events=False).record()


def _run_cell_for_seed(args: tuple[RunManifest, CellSpec, int]) -> tuple[str, int, RunRecord]:
    base, cell, seed = args
    record = _run_record(_cell_manifest(base, cell, seed))
    return cell.run_id, seed, record


def run_monte_carlo(
    base: RunManifest,
    cells: list[CellSpec] | None = None,
    seeds: list[int] | None = None,
    workers: int = 1,
    progress: bool = False,
) -> list[MCRow]:
    """Execute the grid and return one aggregated row per cell."""
    cells = cells if cells is not None else default_grid()
    seeds = seeds if seeds is not None else list(range(10))

    baselines: dict[int, RunRecord] = {}
    for seed in seeds:
        baselines[seed] = _run_record(replace(baseline_of(base), seed=seed))
        if progress:
            print(f"baseline seed={seed} done")

    jobs = [(base, cell, seed) for cell in cells for seed in seeds]
    results: dict[tuple[str, int], RunRecord | None] = {}
    failures: dict[str, list[str]] = {cell.run_id: [] for cell in cells}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_cell_for_seed, job): (job[1], job[2]) for job in jobs
            }
            for future, (cell, seed) in futures.items():
                try:
                    run_id, seed, record = future.result()
                    results[(run_id, seed)] = record
                except Exception as exc:  # keep sweeping, report per cell
                    failures[cell.run_id].append(f"seed {seed}: {exc}")
                    results[(cell.run_id, seed)] = None
                if progress:
                    print(f"cell {cell.run_id} seed={seed} done")
    else:
        for job in jobs:
            _, cell, seed = job
            try:
                run_id, seed, record = _run_cell_for_seed(job)
                results[(run_id, seed)] = record
            except Exception as exc:  # keep sweeping, report per cell
                failures[cell.run_id].append(f"seed {seed}: {exc}")
                results[(cell.run_id, seed)] = None
            if progress:
                print(f"cell {cell.run_id} seed={seed} done")

    rows: list[MCRow] = []
    for cell in cells:
        per_seed: list[MetricsRecord] = []
        for seed in seeds:
            record = results.get((cell.run_id, seed))
            if record is None:
                continue
            per_seed.append(increment_metrics(record, baselines[seed], run_id=cell.run_id))
        rows.append(_aggregate(cell, per_seed, len(seeds), tuple(failures[cell.run_id])))
    return rows


def _aggregate(
    cell: CellSpec, records: list[MetricsRecord], n_seeds: int, failures: tuple[str, ...]
) -> MCRow:
    keys = sorted({k for record in records for k in record.metrics})
    metrics: dict[str, tuple[float, float]] = {}
    for key in keys:
        means = np.array([r.metrics[key][0] for r in records if key in r.metrics])
        metrics[key] = (float(np.mean(means)), float(np.std(means))) if means.size else (0.0, 0.0)
    return MCRow(
        run_id=cell.run_id,
        coordinated=cell.coordinated,
        n_adversaries=cell.n_adversaries,
        metrics=metrics,
        n_seeds=n_seeds,
        failures=failures,
    )


# ------------------------------------------------------------------- output


_ERCC_COLUMNS = ["ERCCFNIoB", "ERCCFNIoE", "ERCCFPIoB", "ERCCFPIoE", "ERCCTPIoB", "ERCCTPIoE"]


def _fmt(value: tuple[float, float] | None) -> str:
    if value is None:
        return "N/A"
    return f"{value[0]:.2f} +/- {value[1]:.2f}"


def render_markdown_table(rows: list[MCRow]) -> str:
    """Two-section results table: ego-relative CC metrics, then per-agent."""
    lines = ["## Ego-relative command center increments", ""]
    header = ["Run ID", "Coord?", "# Adv"] + _ERCC_COLUMNS
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for row in rows:
        cells = [row.run_id, str(row.coordinated), str(row.n_adversaries)]
        cells += [_fmt(row.metrics.get(c)) for c in _ERCC_COLUMNS]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")

    agents = sorted(
        {
            key.split("_", 1)[1]
            for row in rows
            for key in row.metrics
            if key.startswith("CAFPIoB_")
        }
    )
    lines += ["## Compromised-agent increments over baseline", ""]
    header = (
        ["Run ID", "Coord?", "# Adv"]
        + [f"CAFNIoB_{a}" for a in agents]
        + [f"CAFPIoB_{a}" for a in agents]
    )
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for row in rows:
        cells = [row.run_id, str(row.coordinated), str(row.n_adversaries)]
        cells += [_fmt(row.metrics.get(f"CAFNIoB_{a}")) for a in agents]
        cells += [_fmt(row.metrics.get(f"CAFPIoB_{a}")) for a in agents]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    return "\n".join(lines)


def write_mc_outputs(rows: list[MCRow], out_dir: str | Path) -> None:
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    keys = sorted({k for row in rows for k in row.metrics})

    with open(out_path / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["run_id", "coordinated", "n_adversaries", "n_seeds"]
        for key in keys:
            header += [f"{key}_mean", f"{key}_std"]
        writer.writerow(header)
        for row in rows:
            out = [row.run_id, row.coordinated, row.n_adversaries, row.n_seeds]
            for key in keys:
                value = row.metrics.get(key)
                out += ["", ""] if value is None else [f"{value[0]:.6f}", f"{value[1]:.6f}"]
            writer.writerow(out)

    payload = [
        {
            "run_id": row.run_id,
            "coordinated": row.coordinated,
            "n_adversaries": row.n_adversaries,
            "n_seeds": row.n_seeds,
            "failures": list(row.failures),
            "metrics": {k: [v[0], v[1]] for k, v in sorted(row.metrics.items())},
        }
        for row in rows
    ]
    with open(out_path / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(out_path / "table.md", "w", encoding="utf-8") as fh:
        fh.write(render_markdown_table(rows))
