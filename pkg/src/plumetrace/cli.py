"""Command line interface.

    plumetrace run --scenario <file|name> --controller <name> --episodes <n>
                   --seed <s> --out <dir> [--export-trajectories]
                   [--precompute-plume] [--workers <k>] [--export-flowfield]
                   [--plots]
    plumetrace validate --scenario <file|name>
    plumetrace table4 --out <dir> [--episodes <n>] [--seed <s>] [--plots]
    plumetrace report --results <dir> [<dir> ...] --out <dir>

Exit code 0 on success; on failure a machine-readable JSON error record is
printed to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import harness, report
from .scenario import BUNDLED_SCENARIOS, ScenarioError, load_scenario


def _fail(kind: str, message: str, code: int = 1):
    json.dump({"error": kind, "message": message}, sys.stderr)
    sys.stderr.write("\n")
    return code


def cmd_run(args) -> int:
    try:
        cfg = load_scenario(args.scenario)
    except ScenarioError as exc:
        return _fail("scenario", str(exc))
    if args.precompute_plume:
        cfg.plume.precompute = True
    try:
        batch = harness.run_batch(cfg, args.controller, args.episodes,
                                  seed_base=args.seed, workers=args.workers,
                                  record_traces=args.export_trajectories)
    except ValueError as exc:
        return _fail("run", str(exc))
    files = harness.export_results(batch, args.out,
                                   export_trajectories=args.export_trajectories,
                                   export_flow=args.export_flowfield)
    summary = {"scenario": cfg.name, "controller": args.controller,
               "episodes": batch.n_episodes,
               "success_rate": batch.success_rate,
               "mean_error_all": batch.mean_error_all,
               "out": os.path.abspath(args.out)}
    print(json.dumps(summary, indent=2))
    if args.plots:
        report.render_report([args.out], os.path.join(args.out, "figures"))
    return 0


def cmd_validate(args) -> int:
    try:
        cfg = load_scenario(args.scenario)
    except ScenarioError as exc:
        return _fail("scenario", str(exc))
    print(json.dumps({"scenario": cfg.name, "valid": True,
                      "steps": cfg.episode.n_steps,
                      "emitter": list(cfg.plume.emitter),
                      "meander_gain": cfg.wind.G}, indent=2))
    return 0


def cmd_table4(args) -> int:
    """Run the six bundled test scenarios and summarize per-scenario metrics."""
    rows = []
    dirs = []
    for name in ("no_meander_80_60", "no_meander_60_120",
                 "small_meander_80_60", "small_meander_60_120",
                 "medium_meander_80_60", "medium_meander_60_120"):
        cfg = load_scenario(name)
        batch = harness.run_batch(cfg, args.controller, args.episodes,
                                  seed_base=args.seed, workers=args.workers,
                                  record_traces=args.export_trajectories)
        out = os.path.join(args.out, name)
        harness.export_results(batch, out,
                               export_trajectories=args.export_trajectories)
        dirs.append(out)
        rows.append({"scenario": name,
                     "success_rate": batch.success_rate,
                     "mean_error_all": batch.mean_error_all,
                     "mean_error_success": batch.mean_error_success,
                     "median_error": float(sorted(batch.sorted_distances)[
                         len(batch.sorted_distances) // 2])})
        print(f"{name}: success {batch.success_rate:.2f} "
              f"mean err {batch.mean_error_all:.2f} m")
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump({"episodes": args.episodes, "seed_base": args.seed,
                   "controller": args.controller, "rows": rows},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.plots:
        report.render_report(dirs, os.path.join(args.out, "figures"),
                             labels=[r["scenario"] for r in rows])
    return 0


def cmd_report(args) -> int:
    missing = [d for d in args.results
               if not os.path.exists(os.path.join(d, "metrics.json"))]
    if missing:
        return _fail("report", f"no metrics.json under: {missing}")
    files = report.render_report(args.results, args.out)
    print(json.dumps({"figures": files}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plumetrace",
                                description="multi-UAV plume source "
                                            "localization simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario batch")
    run.add_argument("--scenario", required=True,
                     help=f"path or bundled name ({', '.join(sorted(set(BUNDLED_SCENARIOS)))})")
    run.add_argument("--controller", default="seek+anchor_heuristic",
                     choices=["seek+anchor_heuristic", "fluxotaxis"])
    run.add_argument("--episodes", type=int, default=100)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--export-trajectories", action="store_true")
    run.add_argument("--export-flowfield", action="store_true")
    run.add_argument("--precompute-plume", action="store_true")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--plots", action="store_true",
                     help="render figures next to the exported files")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="validate a scenario file")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=cmd_validate)

    t4 = sub.add_parser("table4", help="run all six bundled test scenarios")
    t4.add_argument("--out", required=True)
    t4.add_argument("--episodes", type=int, default=100)
    t4.add_argument("--seed", type=int, default=0)
    t4.add_argument("--controller", default="seek+anchor_heuristic",
                    choices=["seek+anchor_heuristic", "fluxotaxis"])
    t4.add_argument("--workers", type=int, default=1)
    t4.add_argument("--export-trajectories", action="store_true")
    t4.add_argument("--plots", action="store_true")
    t4.set_defaults(func=cmd_table4)

    rep = sub.add_parser("report", help="render figures from exported results")
    rep.add_argument("--results", nargs="+", required=True)
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return _fail("interrupted", "aborted by user", code=130)
    except OSError as exc:
        return _fail("io", f"{exc.filename}: {exc.strerror or exc}", code=1)


if __name__ == "__main__":
    sys.exit(main())
