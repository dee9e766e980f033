"""Command-line interface.

Verbs:
  run       execute an experiment spec (scenario + schemes + seeds [+ sweep])
  sweep     shorthand for run with a sweep axis and grid
  validate  re-check a saved solution JSON against its scenario
  export    re-emit a results CSV as CSV or JSON
  channels  dump the channel realization of a scenario/seed as CSV

The default output directory comes from --out-dir or the WNCC_OUT_DIR
environment variable (falling back to ./wncc-out).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import control, model
from .benchmarks import SCHEMES
from .codesign import CoDesignSolution
from .harness import (ExperimentSpec, load_table_csv, run, summarize,
                      write_cost_csv, write_table_csv)
from .model import PowerAllocation, TimeAllocation
from .state import make_scenario
from .validate import validate_solution


def _out_dir(args) -> str:
    return args.out_dir or os.environ.get("WNCC_OUT_DIR", "wncc-out")


def _parse_list(text, cast):
    return tuple(cast(v) for v in text.split(",") if v.strip() != "")


def _spec_from_args(args, axis="none", values=()) -> ExperimentSpec:
    return ExperimentSpec(
        scenario_path=args.scenario,
        schemes=_parse_list(args.schemes, str),
        sweep_axis=axis,
        sweep_values=values,
        seeds=_parse_list(args.seed_list, int),
        horizon=args.horizon,
        trials=args.trials,
        out_dir=_out_dir(args),
        record_timing=args.timing,
        workers=args.workers,
    )


def _add_run_options(p):
    p.add_argument("scenario", help="scenario config file")
    p.add_argument("--schemes", default=",".join(SCHEMES),
                   help="comma-separated scheme list")
    p.add_argument("--seed-list", default="1", help="comma-separated seeds")
    p.add_argument("--horizon", type=int, default=200,
                   help="closed-loop samples per trial")
    p.add_argument("--trials", type=int, default=100,
                   help="closed-loop trials per row")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--timing", action="store_true",
                   help="record wall times (breaks byte-for-byte determinism)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--render", action="store_true",
                   help="render figures after the run (needs the wncc-plots package)")


def cmd_run(args) -> int:
    spec = _spec_from_args(args)
    table = run(spec)
    _report(table)
    if args.render:
        _render_all(spec)
    return 0


def cmd_sweep(args) -> int:
    values = _parse_list(args.grid, float)
    spec = _spec_from_args(args, axis=args.axis, values=values)
    table = run(spec)
    _report(table)
    if args.render:
        _render_all(spec)
    return 0


def _report(table) -> None:
    print(f"wrote {len(table.rows)} rows to {table.spec.out_dir}/results.csv")
    for (scheme, sv), agg in sorted(summarize(table).items(),
                                    key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        label = scheme if sv is None else f"{scheme}@{sv:g}"
        print(f"  {label:28s} n={agg['n']:3d} mean T={agg['mean_period']*1e3:9.4f} ms")


def _render_all(spec) -> None:
    try:
        from wncc_plots.figures import render_all
    except ImportError:
        print("wncc-plots is not installed; skipping figure rendering",
              file=sys.stderr)
        return
    paths = render_all(spec.out_dir, spec.out_dir)
    if paths:
        print("figures: " + ", ".join(str(p) for p in paths))


def cmd_validate(args) -> int:
    with open(args.solution, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    overrides = {"rng_seed": args.seed} if args.seed is not None else None
    topology, config = model.load_config(args.scenario, overrides)
    plant = control.load_plant(args.scenario)
    channels = model.generate_channels(topology, config)
    gains = model.effective_gains(channels)
    scn = make_scenario(topology, config, gains, plant)
    sol = _solution_from_dict(payload)
    report = validate_solution(sol, scn)
    print(report.summary())
    return 0 if report.ok else 1


def _solution_from_dict(d: dict) -> CoDesignSolution:
    assoc = np.array(d["assoc"], dtype=float)
    return CoDesignSolution(
        protocol=d.get("protocol", "tdma"),
        assoc=assoc,
        power=PowerAllocation(up=np.array(d["power_up_w"]),
                              down=np.array(d["power_down_w"])),
        time=TimeAllocation(up_slots=np.array(d["t_up_s"]),
                            compute_slot=float(d["t_compute_s"]),
                            down_slots=np.array(d["t_down_s"]),
                            period=float(d["period_s"]),
                            protocol=d.get("protocol", "tdma")),
        period=float(d["period_s"]),
        outage_up=np.array(d["outage_up"]),
        outage_dn=np.array(d["outage_dn"]),
        stability_margin=float(d["stability_margin"]),
        status=d.get("status", "optimal"),
    )


def cmd_export(args) -> int:
    rows = load_table_csv(args.results)
    if args.format == "json":
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            if rows:
                fh.write(",".join(rows[0].keys()) + "\n")
                for r in rows:
                    fh.write(",".join(r.values()) + "\n")
    print(f"exported {len(rows)} rows to {args.out}")
    return 0


def cmd_channels(args) -> int:
    overrides = {"rng_seed": args.seed} if args.seed is not None else None
    topology, config = model.load_config(args.scenario, overrides)
    channels = model.generate_channels(topology, config)
    model.export_channels_csv(channels, args.out)
    print(f"wrote channel dump to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wncc", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run an experiment")
    _add_run_options(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    _add_run_options(p_sweep)
    p_sweep.add_argument("--axis", required=True,
                         choices=("downlink_power", "cpu_freq"))
    p_sweep.add_argument("--grid", required=True,
                         help="comma-separated increasing values")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_val = sub.add_parser("validate", help="validate a solution JSON")
    p_val.add_argument("solution")
    p_val.add_argument("--scenario", required=True)
    p_val.add_argument("--seed", type=int, default=None)
    p_val.set_defaults(fn=cmd_validate)

    p_exp = sub.add_parser("export", help="re-emit a results CSV")
    p_exp.add_argument("results")
    p_exp.add_argument("--format", choices=("csv", "json"), default="csv")
    p_exp.add_argument("--out", required=True)
    p_exp.set_defaults(fn=cmd_export)

    p_ch = sub.add_parser("channels", help="dump a channel realization")
    p_ch.add_argument("scenario")
    p_ch.add_argument("--seed", type=int, default=None)
    p_ch.add_argument("--out", required=True)
    p_ch.set_defaults(fn=cmd_channels)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
