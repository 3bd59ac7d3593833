"""``icepath`` command line: synth, mesh, pathbook, plan, compose, simulate, report, crossing-debug.

Every subcommand works inside an output directory (``--out``), reading the
artifacts earlier steps left there and writing its own.  Thresholds are given
in percent.  Failures print one line ``icepath: error: <kind>: <message>`` to
stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import composer, mesh, planner, simulator, transit
from .env_data import DatasetError, RegionSpec, Scenario, generate_synthetic, load_dataset, write_dataset
from .pipeline import GOLDEN_SCENARIO, ConfigError, RunConfig, golden_region

log = logging.getLogger("icepath")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # one-line errors, no usage dump
        raise CliError("usage", message)


def _pct(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 100.0:
        raise argparse.ArgumentTypeError(f"percentage out of range: {text}")
    return value / 100.0


def _region(text: str) -> RegionSpec:
    parts = text.split(",")
    if len(parts) not in (4, 5):
        raise argparse.ArgumentTypeError("region is lat_min,lat_max,lon_min,lon_max[,step]")
    try:
        vals = [float(p) for p in parts]
        return RegionSpec(*vals)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("run"), help="run directory")
    common.add_argument("--dataset", type=Path, action="append",
                        help="dataset file (repeat for extra simulation years); default OUT/dataset.csv")
    common.add_argument("--homogeneity", choices=sorted(mesh.PRESETS), default="strong")
    common.add_argument("--lb", type=_pct, help="lower homogeneity bound, percent")
    common.add_argument("--ub", type=_pct, help="upper homogeneity bound, percent")
    common.add_argument("--t", type=_pct, help="ice presence threshold, percent")
    common.add_argument("--phi", type=_pct, default=0.08, help="risk avoidance threshold, percent")
    common.add_argument("--psi", type=_pct, default=0.12, help="risk exposure threshold, percent")
    common.add_argument("--speed-kmh", type=float, default=3.0)
    common.add_argument("--waypoints", type=Path, help="id,lat,lon CSV; bundled table by default")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="icepath", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--region", type=_region, default=None,
                   help="lat_min,lat_max,lon_min,lon_max[,step]; write as --region=... when it starts with '-'")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--year", default="synthetic")
    s.add_argument("--ice-amplitude", type=float, default=GOLDEN_SCENARIO.ice_amplitude,
                   help="seasonal swing of the ice edge, degrees (0 = static ice)")
    s.add_argument("--ice-jitter", type=float, default=GOLDEN_SCENARIO.ice_jitter)
    s.add_argument("--no-land", action="store_true")

    sub.add_parser("mesh", parents=[common], help="build the monthly mesh layers")
    sub.add_parser("pathbook", parents=[common], help="all-pairs monthly routes")

    s = sub.add_parser("plan", parents=[common], help="extract one route from the path-book")
    s.add_argument("--start", required=True)
    s.add_argument("--goal", required=True)
    s.add_argument("--month", type=int, required=True)

    s = sub.add_parser("compose", parents=[common], help="multi-month journey with waiting")
    s.add_argument("--start", required=True)
    s.add_argument("--goal", required=True)
    s.add_argument("--month", type=int, help="fix the starting month")

    sub.add_parser("simulate", parents=[common], help="replay path-book routes against daily ice")
    sub.add_parser("report", parents=[common], help="accessibility/efficiency/risk metrics")

    s = sub.add_parser("crossing-debug", parents=[common], help="tabulate t(y) for one crossing")
    s.add_argument("--case", required=True, help="x,a,Y,u1,v1,u2,v2 in metres and m/s")
    s.add_argument("--edge", help="edge_lo,edge_hi in metres (default: the right cell's side)")
    s.add_argument("--samples", type=int, default=101)
    return p


# ---------------------------------------------------------------------------
# helpers


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _run_config(args: argparse.Namespace) -> RunConfig:
    preset = mesh.PRESETS[args.homogeneity]
    try:
        return RunConfig(
            homogeneity=args.homogeneity if args.lb is None and args.ub is None and args.t is None else "custom",
            lb=preset.lb if args.lb is None else args.lb,
            ub=preset.ub if args.ub is None else args.ub,
            t=preset.t if args.t is None else args.t,
            phi=args.phi,
            psi=args.psi,
            speed_kmh=args.speed_kmh,
        )
    except (ConfigError, mesh.MeshError) as exc:
        raise CliError("config", str(exc)) from None


def _dataset_paths(args: argparse.Namespace) -> list[Path]:
    paths = args.dataset or [args.out / "dataset.csv"]
    for p in paths:
        if not p.exists():
            raise CliError("missing-artifact", f"dataset not found: {p}")
    return paths


def _load(path: Path):
    try:
        return load_dataset(path)
    except DatasetError as exc:
        raise CliError("dataset", str(exc)) from None


def _echo(args: argparse.Namespace, cfg: RunConfig, datasets: Sequence[Path] = (), **more) -> dict:
    d = cfg.to_dict()
    d["command"] = args.command
    if datasets:
        d["datasets"] = [{"name": p.name, "sha256": _sha256(p)} for p in datasets]
    d["waypoints"] = "bundled" if args.waypoints is None else {
        "name": args.waypoints.name, "sha256": _sha256(args.waypoints)}
    d.update(more)
    return d


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _record_config(out: Path, command: str, echo: dict) -> None:
    path = out / "run_config.json"
    data = {}
    if path.exists():
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            data = {}
    data[command] = echo
    _write(path, json.dumps(data, sort_keys=True, indent=1) + "\n")


def _header(echo: dict) -> str:
    return "# config " + json.dumps(echo, sort_keys=True)


def _waypoints(args: argparse.Namespace) -> list[planner.Waypoint]:
    try:
        return planner.load_waypoints(args.waypoints)
    except (planner.PlannerError, OSError) as exc:
        raise CliError("waypoints", str(exc)) from None


def _layers(dataset, cfg: RunConfig):
    try:
        return mesh.build_year_layers(dataset, cfg.homogeneity_config(), cfg.phi)
    except mesh.MeshError as exc:
        raise CliError("mesh", str(exc)) from None


def _read_book(out: Path) -> planner.PathBook:
    path = out / "pathbook.jsonl"
    if not path.exists():
        raise CliError("missing-artifact", f"path-book not found: {path} (run 'icepath pathbook' first)")
    try:
        return planner.read_pathbook(path)
    except (planner.PlannerError, ValueError, KeyError) as exc:
        raise CliError("pathbook", str(exc)) from None


def _check_wp(book: planner.PathBook, *ids: str) -> None:
    known = {wp.id for wp in book.waypoints}
    for wid in ids:
        if wid not in known:
            raise CliError("config", f"unknown waypoint {wid!r}")


def _check_month(month: int | None) -> None:
    if month is not None and not 1 <= month <= 12:
        raise CliError("config", f"month must be in 1..12, got {month}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args: argparse.Namespace) -> int:
    region = args.region or golden_region()
    scenario = Scenario(
        land=() if args.no_land else GOLDEN_SCENARIO.land,
        ice_edge_lat=GOLDEN_SCENARIO.ice_edge_lat,
        ice_amplitude=args.ice_amplitude,
        ice_lon_amplitude=GOLDEN_SCENARIO.ice_lon_amplitude if args.ice_amplitude else 0.0,
        ice_jitter=args.ice_jitter if args.ice_amplitude else 0.0,
    )
    try:
        ds = generate_synthetic(region, scenario, seed=args.seed, year_label=args.year)
    except DatasetError as exc:
        raise CliError("dataset", str(exc)) from None
    path = args.out / "dataset.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, path)
    land_points = int((~ds.present_points).sum())
    echo = {
        "command": "synth",
        "region": [region.lat_min, region.lat_max, region.lon_min, region.lon_max, region.grid_step],
        "seed": args.seed,
        "year": args.year,
        "scenario": {
            "ice_edge_lat": scenario.ice_edge_lat,
            "ice_amplitude": scenario.ice_amplitude,
            "ice_jitter": scenario.ice_jitter,
            "land_polygons": len(scenario.land),
        },
    }
    _record_config(args.out, "synth", echo)
    if scenario.static_ice:
        print("static ice: concentration does not vary by day")
    print(f"wrote {path}: {region.n_lat} x {region.n_lon} points, {land_points} land points, "
          f"{ds.n_samples} rows, year {args.year}")
    return 0


def cmd_mesh(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    paths = _dataset_paths(args)
    ds = _load(paths[0])
    layers = _layers(ds, cfg)
    echo = _echo(args, cfg, paths[:1], year=ds.year_label)
    mesh.write_mesh(layers, args.out, echo)
    _record_config(args.out, "mesh", echo)
    print(f"wrote mesh: {sum(len(l.leaves) for l in layers)} leaves over 12 months")
    return 0


def cmd_pathbook(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    paths = _dataset_paths(args)
    ds = _load(paths[0])
    waypoints = _waypoints(args)
    layers = _layers(ds, cfg)
    echo = _echo(args, cfg, paths[:1], year=ds.year_label)
    book = planner.build_pathbook(layers, waypoints, cfg.speed_ms, cfg.phi, echo)
    planner.write_pathbook(book, args.out / "pathbook.jsonl")
    _record_config(args.out, "pathbook", echo)
    print(f"wrote path-book: {len(book)} routes")
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    _check_month(args.month)
    book = _read_book(args.out)
    _check_wp(book, args.start, args.goal)
    by_id = {wp.id: wp for wp in book.waypoints}
    src, dst = by_id[args.start], by_id[args.goal]
    if src.point == dst.point:
        route = planner.Route(src, dst, args.month, (), 0.0, ())
    else:
        route = book.get(args.month, args.start, args.goal)
        if route is None:
            raise CliError("unreachable", f"no route {args.start} -> {args.goal} in month {args.month}")
    echo = dict(book.config, command="plan", start=args.start, goal=args.goal, month=args.month)
    doc = {"type": "FeatureCollection", "features": [planner.route_geojson(route)], "config": echo}
    _write(args.out / "route.geojson", json.dumps(doc, sort_keys=True) + "\n")
    _record_config(args.out, "plan", echo)
    print(f"route {args.start} -> {args.goal}, month {args.month}: {route.total_hours:.2f} h, "
          f"{len(route.legs)} legs")
    return 0


def cmd_compose(args: argparse.Namespace) -> int:
    _check_month(args.month)
    book = _read_book(args.out)
    _check_wp(book, args.start, args.goal)
    graph = composer.build_year_graph(book)
    journey = composer.compose(args.start, args.goal, graph, start_month=args.month)
    echo = dict(book.config, command="compose", start=args.start, goal=args.goal, month=args.month)
    year = str(book.config.get("year", ""))
    _write(args.out / "journey.json", composer.dumps_journey(journey, args.start, args.goal, year, echo))
    _record_config(args.out, "compose", echo)
    if journey is None:
        raise CliError("unreachable", f"no journey {args.start} -> {args.goal} within the search horizon")
    _write(args.out / "journey.geojson", json.dumps(composer.journey_geojson(journey, echo), sort_keys=True) + "\n")
    _write(args.out / "calendar.txt", composer.render_calendar(journey))
    print(f"journey {args.start} -> {args.goal}: start {journey.start_month}, "
          f"{journey.total_days:.1f} days, waiting {journey.waiting_months} months")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    book = _read_book(args.out)
    paths = _dataset_paths(args)
    planning_year = str(book.config.get("year", ""))
    reports: list[simulator.RiskReport] = []
    for path in paths:
        ds = _load(path)
        reports.extend(simulator.simulate_pathbook(book, ds, cfg.psi, cfg.rectangle_pad, planning_year,
                                                   max_route_days=composer.MAX_ROUTE_DAYS))
    echo = dict(book.config, command="simulate", psi=cfg.psi,
                datasets=[{"name": p.name, "sha256": _sha256(p)} for p in paths])
    head = _header(echo) + "\n"
    _write(args.out / "reports.csv", head + simulator.reports_csv(reports))
    _write(args.out / "monthly.csv", head + simulator.monthly_csv(reports))
    _record_config(args.out, "simulate", echo)
    print(f"simulated {len(reports)} route runs")
    return 0


def _read_reports(out: Path) -> list[simulator.RiskReport]:
    path = out / "reports.csv"
    if not path.exists():
        raise CliError("missing-artifact", f"reports not found: {path} (run 'icepath simulate' first)")
    text = "".join(ln for ln in path.read_text(encoding="utf-8").splitlines(True) if not ln.startswith("#"))
    out_reports = []
    for row in csv.DictReader(io.StringIO(text)):
        out_reports.append(simulator.RiskReport(
            route_id=row["route_id"],
            planning_month=int(row["planning_month"]),
            planning_year=row["planning_year"],
            simulation_year=row["simulation_year"],
            total_travel_hours=float(row["travel_hours"]),
            risk_hours=float(row["risk_hours"]),
            early_risk_hours=float(row["early_risk_days"]) * 24.0,
        ))
    return out_reports


def cmd_report(args: argparse.Namespace) -> int:
    book = _read_book(args.out)
    reports = _read_reports(args.out)
    conf = book.config
    row = simulator.metrics(book, reports, str(conf.get("homogeneity", "")), float(conf.get("phi", math.nan)),
                            float(conf.get("speed_kmh", math.nan)), composer.MAX_ROUTE_DAYS)
    echo = dict(conf, command="report")
    head = _header(echo) + "\n"
    _write(args.out / "metrics.csv", head + simulator.metrics_csv([row]))
    lines = ["month,src,dst,travel_days,intra_risk_days"]
    risk = {r.route_id: r.early_risk_days for r in reports if r.intra_year}
    for (month, src, dst), route in book:
        if route.total_days <= composer.MAX_ROUTE_DAYS:
            rid = simulator.route_id(route)
            r = risk.get(rid)
            lines.append(f"{month},{src},{dst},{route.total_days:.6f},{'' if r is None else f'{r:.6f}'}")
    _write(args.out / "routes.csv", head + "\n".join(lines) + "\n")
    _record_config(args.out, "report", echo)
    print(f"routes {row.route_count}, mean travel days {row.mean_travel_days:.2f}, "
          f"intra-year risk days {row.intra_risk_days:.2f}")
    return 0


def cmd_crossing_debug(args: argparse.Namespace) -> int:
    try:
        x, a, y_off, u1, v1, u2, v2 = (float(p) for p in args.case.split(","))
    except ValueError:
        raise CliError("usage", "--case needs seven numbers: x,a,Y,u1,v1,u2,v2") from None
    if args.edge:
        try:
            lo, hi = (float(p) for p in args.edge.split(","))
        except ValueError:
            raise CliError("usage", "--edge needs two numbers: edge_lo,edge_hi") from None
    else:
        half = min(x, a)
        lo, hi = y_off - half, y_off + half
    if args.samples < 2:
        raise CliError("usage", "--samples must be at least 2")
    try:
        case = transit.CrossingCase(x, a, y_off, u1, v1, u2, v2, args.speed_kmh / 3.6, lo, hi)
    except transit.TransitError as exc:
        raise CliError("config", str(exc)) from None
    res = transit.optimal_crossing(case)
    echo = {"command": "crossing-debug", "case": [x, a, y_off, u1, v1, u2, v2], "edge": [lo, hi],
            "speed_kmh": args.speed_kmh}
    lines = [_header(echo), f"# optimum y={res.yval!r} total={res.total!r} feasible={res.feasible}",
             "y,t1,t2,total"]
    for y, t1, t2, tot in transit.time_curve(case, args.samples):
        lines.append(f"{y!r},{t1!r},{t2!r},{tot!r}")
    _write(args.out / "crossing.csv", "\n".join(lines) + "\n")
    _record_config(args.out, "crossing-debug", echo)
    print(f"optimal y = {res.yval:.3f} m, total = {res.total:.3f} s ({res.method})")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "mesh": cmd_mesh,
    "pathbook": cmd_pathbook,
    "plan": cmd_plan,
    "compose": cmd_compose,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "crossing-debug": cmd_crossing_debug,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"icepath: error: {exc.kind}: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_USAGE if exc.kind == "usage" else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
