"""Command-line entry point: run one mission plan or sweep a parameter.

`run` optimizes a scenario with the chosen scheme and writes the solution
plus figure-ready CSV series; `sweep` repeats that over a list of budget
or MI-requirement values.  Exit codes: 0 success, 1 input error, 2
infeasible (the message names the violated requirement).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import planner, sca
from .errors import InfeasibleScenario, InfeasibleSensing, ParseError, \
    PlannerError, ValidationError
from .geometry import Trajectory
from .scenario import Scenario, load_scenario, scenario_from_dict, \
    scenario_to_dict
from . import comm as cm
from . import sensing as sn

log = logging.getLogger("isac_planner")

SWEEP_PARAMS = ("p_comm_max", "mi_threshold")


def _fmt(x):
    """Serialize a float with 12 significant digits."""
    return float(f"{float(x):.12g}")


def _fmt_list(arr):
    return [_fmt(v) for v in np.asarray(arr, dtype=float).ravel()]


def state_to_dict(state: planner.AoState, scenario: Scenario) -> dict:
    """JSON-ready snapshot; beams and caches rebuild deterministically."""
    return {
        "scenario": scenario_to_dict(scenario),
        "trajectory": [[_fmt_list(p) for p in uav]
                       for uav in state.trajectory.positions],
        "altitudes": _fmt_list(state.trajectory.altitudes),
        "comm_power": np.vectorize(_fmt)(state.comm_power).tolist(),
        "sensing_power": np.vectorize(_fmt)(state.sensing_power).tolist(),
        "delta": _fmt_list(state.delta),
        "objective_history": _fmt_list(state.objective_history),
        "mi_history": _fmt_list(state.mi_history),
    }


def state_from_dict(raw: dict):
    """Rebuild (state, scenario) from a solution.json payload."""
    scenario = scenario_from_dict(raw["scenario"])
    traj = Trajectory(np.array(raw["trajectory"], dtype=float),
                      np.array(raw["altitudes"], dtype=float))
    codebook = sn.codebook_from_scenario(scenario)
    beams = cm.matched_beams(traj, codebook, scenario)
    state = planner.AoState(
        trajectory=traj,
        comm_power=np.array(raw["comm_power"], dtype=float),
        sensing_power=np.array(raw["sensing_power"], dtype=float),
        delta=np.array(raw["delta"], dtype=float),
        beams=beams,
        epigraph=sca.tight_epigraph(traj, scenario),
        codebook=codebook,
        gains=cm.comm_gain_tensor(traj, beams, scenario),
        cache=sn.build_sensing_cache(traj, codebook, scenario),
        objective_history=list(raw.get("objective_history", [])),
        mi_history=list(raw.get("mi_history", [])),
    )
    return state, scenario


def export_results(state: planner.AoState, scenario: Scenario, out_dir,
                   fmt="csv") -> list:
    """Write solution.json and the per-series CSV files; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    sol = out / "solution.json"
    sol.write_text(json.dumps(state_to_dict(state, scenario), indent=1))
    written.append(sol)
    if fmt == "json":
        return written

    metrics = planner.evaluate_solution(state, scenario)
    K, N = scenario.num_uavs, scenario.num_slots
    M = scenario.num_bs

    def write(name, header, rows):
        path = out / name
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(f"{v:.12g}" if isinstance(v, float)
                                  else str(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
        written.append(path)

    pos = state.trajectory.positions
    write("trajectory.csv", ["k", "n", "x", "y"],
          [(k, n, float(pos[k, n, 0]), float(pos[k, n, 1]))
           for k in range(K) for n in range(N)])
    rates = metrics["per_uav_rates"]
    write("rates.csv", ["n"] + [f"rate_uav{k}" for k in range(K)] + ["sum"],
          [(n, *[float(rates[k, n]) for k in range(K)],
            float(rates[:, n].sum())) for n in range(N)])
    sense_tot = metrics["sensing_power_totals"]
    write("power.csv", ["n", "m", "k", "eta_c", "sensing_total"],
          [(n, m, k, float(state.comm_power[m, k, n]),
            float(sense_tot[m, n]))
           for n in range(N) for m in range(M) for k in range(K)])
    write("delta.csv", ["n", "delta"],
          [(n, float(state.delta[n])) for n in range(N)])
    speeds = metrics["speeds"]
    write("speeds.csv", ["k", "n", "speed"],
          [(k, n, float(speeds[k, n])) for k in range(K)
           for n in range(N - 1)])
    write("convergence.csv", ["iter", "objective", "mi"],
          [(i, float(o), float(mi)) for i, (o, mi) in
           enumerate(zip(state.objective_history, state.mi_history))])
    return written


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    updates = {}
    if args.delta_bounds:
        lo, hi = (float(v) for v in args.delta_bounds.split(","))
        updates["delta_bounds"] = [lo, hi]
    if args.beam_mode:
        updates["beam_mode"] = args.beam_mode
    return scenario.with_updates(**updates) if updates else scenario


def _sweep_scenario(scenario: Scenario, param, value) -> Scenario:
    if param == "p_comm_max":
        # The power sweep moves the whole per-BS budget, sensing included.
        return scenario.with_updates(p_comm_max=value, p_sense_max=value)
    if param == "mi_threshold":
        return scenario.with_updates(mi_threshold=value)
    raise ValueError(f"unknown sweep parameter {param!r}")


def _run_point(payload):
    """Worker for one sweep value; returns one summary row per kind."""
    scenario = scenario_from_dict(payload["scenario"])
    scenario = _sweep_scenario(scenario, payload["param"], payload["value"])
    criteria = planner.ConvergenceCriteria(max_outer=payload["max_outer"],
                                           tol=payload["tol"])
    results = planner.compare_schemes(scenario, payload["kinds"], criteria)
    return [{
        "param": payload["param"],
        "value": payload["value"],
        "kind": kind,
        "feasible": results[kind]["feasible"],
        "sum_rate": results[kind].get("sum_rate"),
        "cumulative_mi": results[kind].get("cumulative_mi"),
    } for kind in payload["kinds"]]


def cmd_run(args) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    criteria = planner.ConvergenceCriteria(max_outer=args.max_outer,
                                           tol=args.tol)
    log.info("running %s on %s", args.benchmark, args.scenario)
    try:
        state = planner.run_ao(scenario, criteria, args.benchmark)
    except (InfeasibleSensing, InfeasibleScenario) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    files = export_results(state, scenario, args.out)
    metrics = planner.evaluate_solution(state, scenario)
    print(f"sum rate {metrics['objective']:.6g} bits/s/Hz, "
          f"cumulative MI {metrics['cumulative_mi']:.6g} bits; "
          f"{len(files)} files in {args.out}")
    return 0


def cmd_sweep(args) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    if args.param not in SWEEP_PARAMS:
        print(f"unknown sweep parameter {args.param!r}", file=sys.stderr)
        return 1
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        print("could not parse --values", file=sys.stderr)
        return 1
    if not values:
        print("empty sweep value list", file=sys.stderr)
        return 1
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    for kind in kinds:
        if kind not in planner.BENCHMARK_KINDS:
            print(f"unknown benchmark kind {kind!r}", file=sys.stderr)
            return 1

    payloads = [{"scenario": scenario_to_dict(scenario), "param": args.param,
                 "value": v, "kinds": kinds, "max_outer": args.max_outer,
                 "tol": args.tol}
                for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            groups = list(pool.map(_run_point, payloads))
    else:
        groups = [_run_point(p) for p in payloads]
    rows = [row for group in groups for row in group]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    lines = ["param,value,kind,sum_rate,cumulative_mi"]
    for row in rows:
        rate = f"{row['sum_rate']:.12g}" if row["feasible"] else "infeasible"
        mi = f"{row['cumulative_mi']:.12g}" if row["feasible"] else ""
        lines.append(f"{row['param']},{row['value']:.12g},{row['kind']},"
                     f"{rate},{mi}")
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path} ({len(rows)} points)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isac-planner",
        description="Joint trajectory, power, and time-division planning "
                    "for cooperative ISAC UAV missions.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True,
                        help="scenario JSON file")
    common.add_argument("--out", default="results",
                        help="output directory (default: results)")
    common.add_argument("--max-outer", type=int, default=30,
                        help="outer iteration cap")
    common.add_argument("--tol", type=float, default=1e-3,
                        help="relative convergence tolerance")
    common.add_argument("--delta-bounds", default=None, metavar="LO,HI",
                        help="override the sensing-fraction box")
    common.add_argument("--beam-mode", choices=("exact", "quantized"),
                        default=None, help="beamformer construction mode")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers (sweep points)")

    p_run = sub.add_parser("run", parents=[common],
                           help="optimize one scenario")
    p_run.add_argument("--benchmark", default="proposed",
                       choices=planner.BENCHMARK_KINDS)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="sweep a parameter over a value list")
    p_sweep.add_argument("--param", required=True,
                         help="p_comm_max or mi_threshold")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    p_sweep.add_argument("--benchmark", "--kinds", dest="kinds",
                         default=",".join(planner.BENCHMARK_KINDS),
                         help="comma-separated benchmark kinds to include")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("ISAC_PLANNER_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ParseError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PlannerError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
