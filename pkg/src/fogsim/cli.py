"""Command-line front end.

    fogsim run --preset egg --gateways 4 --policy edge --until 100000 --seed 1 -o out/
    fogsim stats out/ --loop M.EGG,M.Sensor,M.Concentration
    fogsim export-graph --preset scaling --format dot -o graph.dot
    fogsim validate --scenario s.json

Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from fogsim import presets, results
from fogsim.engine import MODULE_SERVER, SINK, SOURCE
from fogsim.errors import FogSimError
from fogsim.scenario import Scenario, build_simulation, load_scenario, run_scenario

log = logging.getLogger("fogsim")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

MANIFEST_FILE = "manifest.json"
SCENARIO_FILE = "scenario.json"


class UsageError(Exception):
    pass


# -- scenario selection ------------------------------------------------------------------


def _add_source_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=Path, help="scenario JSON file")
    src.add_argument("--preset", choices=sorted(presets.PRESETS), help="built-in preset")
    p.add_argument("--gateways", type=int, default=4, help="egg preset: number of gateways")
    p.add_argument("--policy", choices=["edge", "cloud"], default="edge", help="egg preset: placement")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--until", type=float, default=None, help="override the simulation horizon")


def _preset_kwargs(args: argparse.Namespace) -> dict[str, Any]:
    kw: dict[str, Any] = {}
    if args.preset == "egg":
        kw.update(gateways=args.gateways, policy=args.policy)
    if args.until is not None:
        kw["until"] = args.until
    return kw


def _job(args: argparse.Namespace, index: int) -> dict[str, Any]:
    """A picklable description of one replication."""
    if args.preset:
        base_seed = args.seed if args.seed is not None else 0
        return {"preset": args.preset, "kwargs": {**_preset_kwargs(args), "seed": base_seed + index}}
    scenario = load_scenario(args.scenario)
    seed = (args.seed if args.seed is not None else scenario.seed) + index
    return {"doc": scenario.with_overrides(seed, args.until).doc}


def _scenario_of(job: dict[str, Any]) -> Scenario:
    if "preset" in job:
        return presets.PRESETS[job["preset"]](**job["kwargs"])
    return Scenario(job["doc"])


# -- run ---------------------------------------------------------------------------------


def _run_job(job: dict[str, Any], out: str) -> dict[str, Any]:
    scenario = _scenario_of(job)
    started = time.perf_counter()
    rs = run_scenario(scenario)
    wall = time.perf_counter() - started
    d = Path(out)
    results.write_csv(rs, d)
    (d / SCENARIO_FILE).write_text(scenario.to_json() + "\n", encoding="utf-8")
    manifest = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "until": scenario.until,
        "records": {"compute": len(rs.compute), "link": len(rs.link), "drops": len(rs.drops)},
        "events": len(rs.events),
        "wall_time_s": round(wall, 6),
    }
    (d / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def cmd_run(args: argparse.Namespace) -> int:
    if args.replications < 1:
        raise UsageError("--replications must be at least 1")
    out = Path(args.output)
    jobs = [_job(args, i) for i in range(args.replications)]
    if args.replications == 1:
        dirs = [out]
    else:
        width = max(3, len(str(args.replications - 1)))
        dirs = [out / f"rep-{i:0{width}d}" for i in range(args.replications)]
    workers = args.workers or min(len(jobs), os.cpu_count() or 1)
    if workers == 1 or len(jobs) == 1:
        manifests = [_run_job(j, str(d)) for j, d in zip(jobs, dirs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            manifests = list(pool.map(_run_job, jobs, map(str, dirs)))
    for d, m in zip(dirs, manifests):
        r = m["records"]
        print(f"{d}: seed={m['seed']} compute={r['compute']} link={r['link']} drops={r['drops']} "
              f"wall={m['wall_time_s']:.2f}s")
    return EXIT_OK


# -- stats -------------------------------------------------------------------------------


def _result_dirs(root: Path) -> list[Path]:
    if (root / results.COMPUTE_FILE).exists():
        return [root]
    reps = sorted(p for p in root.iterdir() if p.is_dir() and (p / results.COMPUTE_FILE).exists())
    if not reps:
        raise FileNotFoundError(f"no {results.COMPUTE_FILE} under {root}")
    return reps


def _fmt(x: float | None) -> str:
    return "" if x is None else results.fmt_number(float(x))


def cmd_stats(args: argparse.Namespace) -> int:
    root = Path(args.results)
    if not root.is_dir():
        raise FileNotFoundError(f"results directory {root} does not exist")
    dirs = _result_dirs(root)
    runs = [results.read_csv(d) for d in dirs]
    if not any(rs.compute or rs.link for rs in runs):
        print("no records")
        return EXIT_OK
    loop = [m for m in args.loop.split(",") if m] if args.loop else None
    print(f"replications: {len(runs)}")

    per_metric: dict[str, list[float]] = {}
    for rs in runs:
        if rs.compute:
            ts = [results.times(r) for r in rs.compute]
            for name in results.COMPUTE_METRICS:
                per_metric.setdefault(name, []).append(sum(getattr(t, name) for t in ts) / len(ts))
        if loop:
            sl = results.sequence_latency(rs.compute, loop, messages={r.message for rs_ in runs for r in rs_.compute})
            if sl.mean is not None:
                per_metric.setdefault("loop", []).append(sl.mean)
            print(f"loop {','.join(loop)}: complete={sl.complete} incomplete={sl.incomplete} mean={_fmt(sl.mean)}")
        if rs.link:
            per_metric.setdefault("buffer_max", []).append(float(max(r.buffer for r in rs.link)))
        per_metric.setdefault("drops", []).append(float(len(rs.drops)))

    print("metric,mean,var,min,max,n")
    for name, values in per_metric.items():
        s = results.summarize(values)
        print(f"{name},{_fmt(s['mean'])},{s['var']:.6g},{_fmt(s['min'])},{_fmt(s['max'])},{s['n']}")

    if args.window is not None:
        print()
        print("replication,start,value,count")
        for i, rs in enumerate(runs):
            until = max([r.time_out for r in rs.compute] + [r.ctime for r in rs.link], default=0.0)
            recs = rs.link if args.metric in results.LINK_METRICS and args.metric not in results.COMPUTE_METRICS \
                else rs.compute
            series = results.windowed(recs, args.metric, args.window, until=until, agg=args.agg)
            for start, value, count in series.rows():
                print(f"{i},{_fmt(start)},{_fmt(value)},{count}")
    return EXIT_OK


# -- export-graph ------------------------------------------------------------------------


def graph_roles(scenario: Scenario) -> dict[int, set[str]]:
    """Node -> roles after initial allocation (sender, receiver, failure-candidate)."""
    sim = build_simulation(scenario)
    sim.initialize()
    roles: dict[int, set[str]] = {n: set() for n in sim.topology.nodes}
    for p in sim.processes.values():
        if not p.active or p.node is None:
            continue
        if p.kind == SOURCE and p.parent is None:
            roles[p.node].add("sender")
        elif p.kind in (MODULE_SERVER, SINK):
            roles[p.node].add("receiver")
    for proc in scenario.doc.get("process", []):
        if proc["type"] == "failure":
            for n in proc.get("candidates", []):
                roles[n].add("failure-candidate")
    return roles


def export_graph(scenario: Scenario, fmt: str) -> str:
    topo = scenario.topology()
    roles = graph_roles(scenario)
    scores = topo.betweenness_centrality() if len(topo) else {}
    lines: list[str] = []
    if fmt == "dot":
        lines.append("graph fogsim {")
        for n in sorted(topo.nodes):
            attrs = {"role": ";".join(sorted(roles[n])) or "none", "betweenness": f"{scores[n]:.9g}"}
            custom = topo.nodes[n].custom
            if "x" in custom and "y" in custom:
                attrs["pos"] = f"{custom['x']},{custom['y']}!"
            body = ", ".join(f'{k}="{v}"' for k, v in attrs.items())
            lines.append(f"  {n} [{body}];")
        for (a, b), link in sorted(topo.links.items()):
            lines.append(f'  {a} -- {b} [BW="{link.bw:g}", PR="{link.pr:g}"];')
        lines.append("}")
    else:
        lines.append("# s d BW PR")
        for n in sorted(topo.nodes):
            lines.append(f"# node {n} role={';'.join(sorted(roles[n])) or 'none'} betweenness={scores[n]:.9g}")
        for (a, b), link in sorted(topo.links.items()):
            lines.append(f"{a} {b} {link.bw:g} {link.pr:g}")
    return "\n".join(lines) + "\n"


def cmd_export_graph(args: argparse.Namespace) -> int:
    job = _job(args, 0)
    text = export_graph(_scenario_of(job), args.format)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- validate ----------------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    sc = load_scenario(args.scenario)
    topo = sc.topology()
    print(f"ok: {sc.name} ({len(topo)} nodes, {len(topo.links)} links, {len(sc.doc['application'])} applications)")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fogsim", description="Discrete-event fog computing simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario or preset and write CSV results")
    _add_source_args(p)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--replications", type=int, default=1, help="seed-varied runs (seed, seed+1, ...)")
    p.add_argument("--workers", type=int, default=None, help="parallel processes for replications")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stats", help="summarize a results directory")
    p.add_argument("results", help="directory with CSVs, or with rep-* subdirectories")
    p.add_argument("--loop", help="comma-separated message chain for sequence latency")
    p.add_argument("--window", type=float, default=None, help="bucket width for a windowed series")
    p.add_argument("--metric", default="latency", help="metric for the windowed series")
    p.add_argument("--agg", default="mean", choices=["mean", "max", "min", "count", "sum"])
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export-graph", help="write the topology with role annotations")
    _add_source_args(p)
    p.add_argument("--format", choices=["dot", "edgelist"], default="dot")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", type=Path, required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FogSimError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
