"""Command-line interface: run, mc, snapshot, validate.

Exit codes: 0 success, 2 manifest/config error, 3 run failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import BuildError, ManifestError, RunManifest, default_registry
from .scenario import ConfigError


def _load_manifest(args: argparse.Namespace) -> RunManifest:
    if getattr(args, "config", None):
        manifest = RunManifest.load(args.config)
    else:
        manifest = RunManifest()
    if getattr(args, "seed", None) is not None:
        manifest = replace(manifest, seed=args.seed)
    if getattr(args, "agents", None) is not None:
        manifest = replace(
            manifest, scenario=replace(manifest.scenario, n_infrastructure=args.agents)
        )
    if getattr(args, "adversaries", None) is not None:
        manifest = replace(
            manifest, adversary=replace(manifest.adversary, n_compromised=args.adversaries)
        )
    if getattr(args, "coordinated", False):
        manifest = replace(manifest, adversary=replace(manifest.adversary, coordinated=True))
    if getattr(args, "out", None):
        manifest = replace(manifest, out_dir=str(args.out))
    if getattr(args, "snapshot_every", None) is not None:
        manifest = replace(manifest, snapshot_every=args.snapshot_every)
    return manifest


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="run manifest JSON file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--agents", type=int, help="number of infrastructure agents")
    parser.add_argument("--adversaries", type=int, help="number of compromised agents")
    parser.add_argument(
        "--coordinated", action="store_true", help="use the coordinated threat model"
    )


def _cmd_run(args: argparse.Namespace) -> int:
    from .runner import launch

    manifest = _load_manifest(args)
    out_dir = args.out or manifest.out_dir or "runs/latest"
    result = launch(manifest, out_dir=out_dir)
    print(f"run complete: {len(result.rows)} frames, outputs in {out_dir}")
    mean_cc_fp = result.summary.get("cc_fp", (0.0, 0.0))[0]
    mean_cc_fn = result.summary.get("cc_fn", (0.0, 0.0))[0]
    print(f"  cc picture: mean fp {mean_cc_fp:.2f}, mean fn {mean_cc_fn:.2f} per frame")
    return 0


def _cmd_mc(args: argparse.Namespace) -> int:
    from .montecarlo import CellSpec, default_grid, run_monte_carlo, write_mc_outputs

    manifest = _load_manifest(args)
    cells = default_grid()
    if args.cells:
        cells = []
        for token in args.cells.split(","):
            token = token.strip().upper()
            kind, _, count = token.partition("-")
            if kind not in ("C", "UC") or not count.isdigit():
                raise ManifestError(f"bad cell token {token!r}; expected e.g. UC-2")
            cells.append(CellSpec(coordinated=kind == "C", n_adversaries=int(count)))
    seeds = [manifest.seed + i for i in range(args.seeds)]
    rows = run_monte_carlo(
        manifest, cells=cells, seeds=seeds, workers=args.workers, progress=args.progress
    )
    out_dir = args.out or manifest.out_dir or "runs/mc"
    write_mc_outputs(rows, out_dir)
    print(f"monte carlo complete: {len(rows)} cells x {len(seeds)} seeds, outputs in {out_dir}")
    for row in rows:
        fp = row.metrics.get("ERCCFPIoB", (0.0, 0.0))
        fn = row.metrics.get("ERCCFNIoB", (0.0, 0.0))
        print(
            f"  {row.run_id}: ERCCFPIoB {fp[0]:.2f} +/- {fp[1]:.2f}, "
            f"ERCCFNIoB {fn[0]:.2f} +/- {fn[1]:.2f}"
        )
    return 0


def _cmd_snapshot(args: argparse.Namespace) -> int:
    from .plots import export_snapshot

    out = export_snapshot(args.run_dir, args.frame, args.picture, args.out)
    print(f"wrote {out}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    manifest = _load_manifest(args)
    manifest.validate(default_registry())
    print("manifest OK")
    print(f"  agents: ego + {manifest.scenario.n_infrastructure} infrastructure")
    print(
        f"  adversary: n={manifest.adversary.n_compromised} "
        f"coordinated={manifest.adversary.coordinated}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusionsim",
        description="Deterministic testbed for attacks on centralized multi-agent track fusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one manifest")
    _add_common_flags(p_run)
    p_run.add_argument("--snapshot-every", type=int, dest="snapshot_every",
                       help="render BEV snapshots every N frames")
    p_run.set_defaults(func=_cmd_run)

    p_mc = sub.add_parser("mc", help="grid sweep over attack type and adversary count")
    _add_common_flags(p_mc)
    p_mc.add_argument("--seeds", type=int, default=10, help="number of paired seeds")
    p_mc.add_argument("--cells", type=str, help="comma list like UC-1,UC-2,C-2")
    p_mc.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_mc.add_argument("--progress", action="store_true", help="print per-run progress")
    p_mc.set_defaults(func=_cmd_mc)

    p_snap = sub.add_parser("snapshot", help="render frames from a finished run")
    p_snap.add_argument("run_dir", type=Path, help="run output directory")
    p_snap.add_argument("--frame", type=int, required=True)
    p_snap.add_argument("--picture", choices=("ego", "cc"), default="cc")
    p_snap.add_argument("--out", type=Path, help="output image path")
    p_snap.set_defaults(func=_cmd_snapshot)

    p_val = sub.add_parser("validate", help="check a manifest without running it")
    _add_common_flags(p_val)
    p_val.set_defaults(func=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ManifestError, BuildError, ConfigError) as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"run failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
