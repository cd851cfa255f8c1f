"""Command-line front end: run / check / plot.

    mzbohm run <config.ini> [--seed N] [--n N] [--scenario simple|ww]
                            [--no-oracle] [--out DIR] [--workers N]
    mzbohm check <config.ini> [...same flags]   # invariants only, no exports
    mzbohm plot <run-dir>                       # re-render plots from exports

Exit code 0 iff every enabled invariant check passed. MZBOHM_OUT_ROOT
prefixes relative output directories.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ._backend import backend_name
from .errors import SimulationError
from .scenario import ScenarioKind, build_scenario, parse_config
from . import runner


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("config", help="scenario config file (INI)")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--n", type=int, default=None, help="override ensemble size")
    p.add_argument("--scenario", choices=["simple", "ww"], default=None,
                   help="override scenario kind")
    p.add_argument("--no-oracle", action="store_true",
                   help="skip the split-operator grid-oracle checks")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel trajectory workers")


def _overrides(args) -> dict:
    ov = {
        "seed": args.seed,
        "n": args.n,
        "workers": args.workers,
        "out": args.out,
    }
    if args.scenario is not None:
        ov["scenario"] = ScenarioKind(args.scenario)
    if args.no_oracle:
        ov["oracle"] = False
    return ov


def _resolve_out(cfg) -> Path:
    out = cfg.out or f"runs/{cfg.scenario.value}-seed{cfg.seed}"
    out_path = Path(out)
    root = os.environ.get("MZBOHM_OUT_ROOT")
    if root and not out_path.is_absolute():
        out_path = Path(root) / out_path
    return out_path


def _execute(args, export: bool) -> int:
    cfg, defaults = parse_config(args.config, overrides=_overrides(args))
    print(f"# mzbohm {cfg.scenario.value} run: seed={cfg.seed} n={cfg.n} "
          f"oracle={'on' if cfg.oracle else 'off'} backend={backend_name()}")
    summary, scn, trajs, scan = runner.run_scenario(cfg)
    for check in summary.checks:
        print(check.line())
    print(f"# counts [r,t]x[D1,D2]: {summary.ensemble.counts.tolist()} "
          f"undetected={summary.ensemble.undetected}")
    print(f"# wall time: {summary.wall_time:.2f}s")
    if export:
        out_dir = _resolve_out(cfg)
        names = runner.write_outputs(summary, scn, trajs, scan, out_dir, defaults)
        print(f"# wrote {len(names)} artifacts to {out_dir}")
    return 0 if summary.all_passed else 1


def _plot(args) -> int:
    import json

    run_dir = Path(args.run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise SimulationError(f"{run_dir} has no manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    from .scenario import ScenarioConfig

    conf = dict(manifest["config"])
    conf["scenario"] = ScenarioKind(conf["scenario"])
    cfg = ScenarioConfig(**conf)
    scn = build_scenario(cfg)
    traj_dir = run_dir / "trajectories"
    trajs = []
    for name in sorted(p.name for p in traj_dir.glob("traj_*.tsv")):
        trajs.append(runner.read_trajectory_file(traj_dir / name))
    from .optics import EventKind
    from . import trajectories as tj

    t_split = next(e.time for e in scn.events if e.kind is EventKind.BEAM_SPLIT)
    for tr in trajs:
        tr.origin_arm = tj.classify_origin_arm(tr, scn.geometry.beam_splitter, t_split)
        tr.endpoint = tj.attribute_endpoint(tr, scn.geometry.detectors)
    names = runner.render_plots(scn, trajs, run_dir / "plots")
    print(f"# re-rendered {len(names)} plots into {run_dir / 'plots'}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mzbohm", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario and export artifacts")
    _add_common(p_run)
    p_check = sub.add_parser("check", help="run invariant checks only (no exports)")
    _add_common(p_check)
    p_plot = sub.add_parser("plot", help="re-render plots from an existing run directory")
    p_plot.add_argument("run_dir", help="directory written by 'mzbohm run'")

    args = ap.parse_args(argv)
    try:
        if args.command == "run":
            return _execute(args, export=True)
        if args.command == "check":
            return _execute(args, export=False)
        return _plot(args)
    except SimulationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
