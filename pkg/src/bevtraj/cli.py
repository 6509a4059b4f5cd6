"""Command-line interface: ``bevtraj {process,stats,eval,map,render}``.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import SPLITS, DataError
from .geodesy import UtmOrigin
from .mapgraph import DEFAULT_SPACING, build_lane_graph, parse_lanelet_osm, read_lane_graph, write_lane_graph
from .metrics import BRIER_MODES, CR_RULES, METRICS, MODE_RULES, EvalConfig, evaluate
from .records import read_manifest, read_split
from .resample import FilterSpec
from .scenario import ScenarioConfig

log = logging.getLogger("bevtraj")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2
MANEUVER_GROUPS = (("LCL", (0, 1, 2)), ("LK", (3,)), ("LCR", (4, 5, 6)))


class UsageError(Exception):
    pass


def _lk_fraction(values):
    if not values:
        return 0.5
    out = {}
    for v in values:
        name, _, frac = v.rpartition("=")
        try:
            f = float(frac)
        except ValueError:
            raise UsageError(f"--lk-fraction: cannot parse {v!r}; expected FRAC or NAME=FRAC") from None
        if not 0 < f < 1:
            raise UsageError(f"--lk-fraction: {f} not in (0, 1)")
        out[name or "*"] = f
    return out["*"] if list(out) == ["*"] else out


def cmd_process(args) -> int:
    from .pipeline import ProcessOptions, process

    input_dir = Path(args.input_dir)
    if not input_dir.is_dir():
        raise UsageError(f"--input-dir: {input_dir} is not a directory")
    try:
        options = ProcessOptions(
            dataset=args.dataset, seed=args.seed,
            scenario=ScenarioConfig(obs_len=args.obs_len, pred_len=args.pred_len, neighbors=args.neighbors,
                                    min_scored_future=args.min_scored_future, agent_frame=args.agent_frame,
                                    include_accel=args.include_accel),
            filter=FilterSpec(order=args.filter_order, ripple_db=args.filter_ripple_db,
                              cutoff_norm=args.filter_cutoff, zero_phase=not args.no_zero_phase),
            target_rate=args.target_rate, heading_speed_floor=args.heading_speed_floor,
            lk_fraction=_lk_fraction(args.lk_fraction), anchors_per_agent=args.anchors_per_agent,
            map_spacing=args.map_spacing, binary=args.binary,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    summary = process(input_dir, args.output_dir, options)
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(f"dataset: {summary['dataset']}  recordings: {len(summary['recordings'])}")
        print(format_count_table({s: summary["splits"][s] for s in SPLITS}))
    return EXIT_OK


def format_count_table(stats: dict) -> str:
    """Scenario counts per split as ``n (trajectories)`` plus a total row."""
    rows = [("split", "scenarios (trajectories)")]
    tot_n = tot_t = 0
    for split, st in stats.items():
        rows.append((split, f"{st['count']} ({st['num_trajectories']})"))
        tot_n += st["count"]
        tot_t += st["num_trajectories"]
    rows.append(("total", f"{tot_n} ({tot_t})"))
    w = max(len(r[0]) for r in rows)
    return "\n".join(f"{a:<{w}}  {b}" for a, b in rows)


def maneuver_shares(hist: dict) -> dict:
    """Counts and percentages of lane-change-left / lane-keep / lane-change-right labels."""
    total = sum(int(v) for v in hist.values())
    out = {}
    for name, labels in MANEUVER_GROUPS:
        n = sum(int(hist.get(str(k), 0)) for k in labels)
        out[name] = {"count": n, "percent": 100.0 * n / total if total else 0.0}
    return out


def _split_dirs(path: Path) -> dict:
    if (path / "manifest.json").exists():
        return {read_manifest(path)["split"]: path}
    found = {s: path / s for s in SPLITS if (path / s / "manifest.json").exists()}
    if not found:
        raise DataError(f"{path}: no split manifest found")
    return found


def cmd_stats(args) -> int:
    dirs = _split_dirs(Path(args.split_dir))
    report = {}
    for split, d in dirs.items():
        m = read_manifest(d)
        report[split] = {
            "count": m["count"], "num_trajectories": m.get("num_trajectories", 0),
            "num_unique_agents": m.get("num_unique_agents", 0),
            "maneuver_histogram": m.get("maneuver_histogram", {}),
            "maneuvers": maneuver_shares(m.get("maneuver_histogram", {})) if m.get("maneuver_histogram") else {},
            "class_histogram": m.get("class_histogram", {}),
        }
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
        return EXIT_OK
    print(format_count_table(report))
    if any(r["maneuvers"] for r in report.values()):
        print()
        print(f"{'split':<6}  " + "  ".join(f"{name:>14}" for name, _ in MANEUVER_GROUPS))
        for split, r in report.items():
            if r["maneuvers"]:
                cells = [f"{r['maneuvers'][n]['count']} ({r['maneuvers'][n]['percent']:.1f}%)" for n, _ in MANEUVER_GROUPS]
                print(f"{split:<6}  " + "  ".join(f"{c:>14}" for c in cells))
    classes = sorted({c for r in report.values() for c, n in r["class_histogram"].items() if n})
    if classes:
        print()
        print(f"{'split':<6}  " + "  ".join(f"{c:>10}" for c in classes))
        for split, r in report.items():
            print(f"{split:<6}  " + "  ".join(f"{r['class_histogram'].get(c, 0):>10}" for c in classes))
    return EXIT_OK


def cmd_eval(args) -> int:
    metrics = tuple(m.strip() for m in args.metrics.split(",")) if args.metrics else METRICS
    try:
        config = EvalConfig(mode_rule=args.mode_rule, cr_rule=args.cr_rule, brier=args.brier, task=args.task,
                            allow_missing=args.allow_missing, metrics=metrics)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = evaluate(args.split_dir, args.predictions, config)
    if args.output:
        Path(args.output).write_text(report.to_json() + "\n", encoding="utf-8")
    if args.json:
        print(report.to_json())
    else:
        c = report.counts
        print(f"scenarios: {c['scenarios']}  agents: {c['agents']}  missing: {c['missing']}  "
              f"(mode rule {config.mode_rule}, collisions {config.cr_rule}, brier {config.brier})")
        for name, value in report.metrics.items():
            print(f"  {name:<5} {'n/a' if value is None else f'{value:.6f}'}")
    return EXIT_OK


def cmd_map(args) -> int:
    raw = parse_lanelet_osm(args.osm)
    origin = None
    if args.origin:
        try:
            lat, lon = (float(v) for v in args.origin.split(","))
        except ValueError:
            raise UsageError("--origin: expected LAT,LON") from None
        origin = (lat, lon)
    elif args.utm_origin:
        try:
            zone, e, n = args.utm_origin.split(",")
            origin = UtmOrigin(int(zone), float(e), float(n))
        except ValueError:
            raise UsageError("--utm-origin: expected ZONE,EASTING,NORTHING") from None
    graph = build_lane_graph(raw, args.spacing, origin)
    location = args.location or Path(args.osm).stem
    if args.output:
        write_lane_graph(graph, args.output, location)
    nodes, ways, rels = raw.counts
    summary = {"nodes": nodes, "ways": ways, "relations": rels, "points": graph.num_points, "edges": graph.num_edges}
    print(json.dumps(summary, sort_keys=True) if args.json else
          "  ".join(f"{k}: {v}" for k, v in summary.items()))
    return EXIT_OK


def cmd_render(args) -> int:
    from .render import render_svg

    split = read_split(args.split_dir)
    s = split.by_id().get(args.scenario_id)
    if s is None:
        raise DataError(f"unknown scenario {args.scenario_id!r} in {args.split_dir}")
    graph = None
    if s.map_ref:
        maps_dir = Path(args.maps_dir) if args.maps_dir else Path(args.split_dir).parent / "maps"
        path = maps_dir / f"{s.map_ref}.ndjson"
        if path.exists():
            graph = read_lane_graph(path)
        else:
            log.warning("map %s not found; rendering agents only", path)
    if graph is not None and s.frame_origin is not None:
        log.warning("scenario is in the target-agent frame; map omitted")
        graph = None
    Path(args.out).write_text(render_svg(s, graph), encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bevtraj", description="Preprocess and benchmark BEV trajectory datasets.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("process", help="raw recordings -> train/val/test scenario splits")
    pp.add_argument("--dataset", default="auto", help="dataset name or 'auto' to detect from files")
    pp.add_argument("--input-dir", required=True)
    pp.add_argument("--output-dir", required=True)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--obs-len", type=int, default=15, help="observed steps at 5 Hz")
    pp.add_argument("--pred-len", type=int, default=25, help="predicted steps at 5 Hz")
    pp.add_argument("--neighbors", type=int, default=8, help="max scored agents besides the target")
    pp.add_argument("--min-scored-future", type=int, default=15)
    pp.add_argument("--agent-frame", choices=("off", "ta"), default="off")
    pp.add_argument("--heading-speed-floor", type=float, default=0.1, help="m/s")
    pp.add_argument("--lk-fraction", action="append", metavar="[NAME=]FRAC",
                    help="target lane-keep share for highway data (repeatable per dataset)")
    pp.add_argument("--anchors-per-agent", type=int, default=1)
    pp.add_argument("--target-rate", type=float, default=5.0)
    pp.add_argument("--filter-order", type=int, default=7)
    pp.add_argument("--filter-ripple-db", type=float, default=0.05)
    pp.add_argument("--filter-cutoff", type=float, default=0.8, help="fraction of the target Nyquist frequency")
    pp.add_argument("--no-zero-phase", action="store_true", help="filter forward only")
    pp.add_argument("--map-spacing", type=float, default=DEFAULT_SPACING)
    pp.add_argument("--binary", action="store_true", help="also write TRJK1 binary records")
    pp.add_argument("--include-accel", action="store_true")
    pp.add_argument("--json", action="store_true")
    pp.set_defaults(func=cmd_process)

    ps = sub.add_parser("stats", help="scenario, maneuver and class counts of split directories")
    ps.add_argument("split_dir")
    ps.add_argument("--json", action="store_true")
    ps.set_defaults(func=cmd_stats)

    pe = sub.add_parser("eval", help="score a prediction file against a split")
    pe.add_argument("split_dir")
    pe.add_argument("predictions")
    pe.add_argument("--metrics", help=f"comma-separated subset of {','.join(METRICS)}")
    pe.add_argument("--mode-rule", choices=MODE_RULES, default="min_fde")
    pe.add_argument("--cr-rule", choices=CR_RULES, default="pred_pred")
    pe.add_argument("--brier", choices=BRIER_MODES, default="paper")
    pe.add_argument("--task", choices=("single", "multi"), default="multi")
    pe.add_argument("--allow-missing", action="store_true")
    pe.add_argument("--output", help="write the full report JSON here")
    pe.add_argument("--json", action="store_true")
    pe.set_defaults(func=cmd_eval)

    pm = sub.add_parser("map", help="compile a Lanelet2 .osm file to a lane graph")
    pm.add_argument("osm")
    pm.add_argument("--output")
    pm.add_argument("--location")
    pm.add_argument("--spacing", type=float, default=DEFAULT_SPACING)
    g = pm.add_mutually_exclusive_group()
    g.add_argument("--origin", help="LAT,LON of the local frame origin")
    g.add_argument("--utm-origin", help="ZONE,EASTING,NORTHING of the local frame origin")
    pm.add_argument("--json", action="store_true")
    pm.set_defaults(func=cmd_map)

    pr = sub.add_parser("render", help="draw one scenario as SVG")
    pr.add_argument("split_dir")
    pr.add_argument("scenario_id")
    pr.add_argument("out")
    pr.add_argument("--maps-dir")
    pr.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bevtraj {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"bevtraj {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"bevtraj {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
