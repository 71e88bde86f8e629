"""Command-line front end.

Subcommands:
  check    rigidity report for a framework file (exit 0 rigid, 2 not rigid)
  sim      run a scenario, write the trace CSV (exit 0 ok, 3 sustained dip)
  compare  column-wise diff of two trace CSVs (exit 1 if not comparable)

Every error path exits 1 with a message on stderr.  ``--set dotted.path=value``
patches the input JSON before parsing, e.g. ``--set gains.k2=0.1``.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .engine import (
    Scenario,
    ScenarioRejected,
    Trace,
    TRACE_COLUMNS,
    apply_overrides,
    run_scenario,
)
from .graphs import Graph, check_obstacles, check_positions, complete_graph
from .rigidity import WeightedFramework, rigidity_report
from .weights import WeightParams, edge_weights


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _framework_from_dict(data: dict) -> WeightedFramework:
    """Framework from either a bare framework file or a full scenario file.

    A bare framework carries n/positions and optional edges/obstacles/weights;
    without a weight model, edges get unit weights.
    """
    if "gains" in data:
        scn = Scenario.from_dict(data)
        graph = scn.base_graph()
        w = edge_weights(graph, scn.positions, scn.obstacles, scn.weights)
        return WeightedFramework(graph, scn.positions, w)
    positions = check_positions(np.asarray(data["positions"], dtype=float))
    n = int(data.get("n", positions.shape[0]))
    if n != positions.shape[0]:
        raise ValueError(f"n={n} does not match {positions.shape[0]} positions")
    if data.get("edges") is not None:
        graph = Graph(n, [(int(u), int(v)) for u, v in data["edges"]], preserve_order=True)
    else:
        graph = complete_graph(n)
    obstacles = check_obstacles(data.get("obstacles"))
    if "weights" in data:
        wp = data["weights"]
        params = WeightParams(
            D=float(wp["D"]), l_min=float(wp["l_min"]), l_0=float(wp["l_0"]),
            delta_a=float(wp["delta_a"]), delta_b=float(wp["delta_b"]),
            sigma_beta=float(wp["sigma_beta"]),
        )
        w = edge_weights(graph, positions, obstacles, params)
    else:
        w = np.ones(graph.m)
    return WeightedFramework(graph, positions, w)


def _cmd_check(args) -> int:
    data = apply_overrides(_load_json(args.input), args.set or [])
    fw = _framework_from_dict(data)
    report = rigidity_report(fw)
    payload = json.dumps(report.to_dict(), indent=2)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    if not args.quiet:
        print(payload)
    return 0 if report.is_rigid else 2


def sustained_dip(trace: Trace, lambda_min: float, t_warm: float) -> bool:
    """True when lambda_7 stays at or below the threshold for two or more
    consecutive post-warm-up ticks (isolated single-tick spikes are tolerated)."""
    times = trace.times()
    lam7 = trace.series("lam7_true")[:, 0]
    run = 0
    for t, lam in zip(times, lam7):
        if t <= t_warm:
            continue
        run = run + 1 if lam <= lambda_min else 0
        if run >= 2:
            return True
    return False


def _cmd_sim(args) -> int:
    data = apply_overrides(_load_json(args.input), args.set or [])
    scenario = Scenario.from_dict(data)
    sim = run_scenario(scenario, audit=args.audit)
    if args.output:
        sim.trace.write_csv(args.output)
    if not args.quiet:
        print(json.dumps(sim.summary(), indent=2))
    if sustained_dip(sim.trace, scenario.potential.lambda_min, scenario.t_warm):
        return 3
    return 0


def _cmd_compare(args) -> int:
    a = Trace.read_csv(args.trace_a)
    b = Trace.read_csv(args.trace_b)
    if len(a.rows) != len(b.rows):
        print(
            f"traces are not comparable: {len(a.rows)} vs {len(b.rows)} rows",
            file=sys.stderr,
        )
        return 1
    stats = {}
    for name in TRACE_COLUMNS:
        ca, cb = a.column(name), b.column(name)
        diff = np.abs(ca - cb)
        stats[name] = {
            "max_abs_diff": float(diff.max()),
            "rms_diff": float(np.sqrt(np.mean(diff * diff))),
        }
    if not args.quiet:
        print(json.dumps({"rows": len(a.rows), "columns": stats}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmrigid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("check", help="rigidity report for a framework JSON")
    pc.add_argument("--input", "-i", required=True)
    pc.add_argument("--output", "-o", default=None, help="write the report JSON here")
    pc.add_argument("--set", action="append", metavar="KEY=VALUE")
    pc.add_argument("--quiet", action="store_true")
    pc.set_defaults(func=_cmd_check)

    ps = sub.add_parser("sim", help="run a scenario JSON, write a trace CSV")
    ps.add_argument("--input", "-i", required=True)
    ps.add_argument("--output", "-o", default=None, help="trace CSV path")
    ps.add_argument("--set", action="append", metavar="KEY=VALUE")
    ps.add_argument("--quiet", action="store_true")
    ps.add_argument("--audit", action="store_true", help="include bus audit in summary")
    ps.set_defaults(func=_cmd_sim)

    pm = sub.add_parser("compare", help="column-wise diff of two trace CSVs")
    pm.add_argument("trace_a")
    pm.add_argument("trace_b")
    pm.add_argument("--quiet", action="store_true")
    pm.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioRejected as exc:
        print(f"scenario rejected: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
