"""Single-month route planning over a leaf layer and the all-pairs path-book."""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .mesh import CellClass, CellNode, MonthLayer
from .transit import LocalFrame, TransitResult, crossing, segment_time

EARTH_RADIUS_M = 6_371_008.8
TIE_TOL_M = 1e-6
# decimals kept when routes are written out
COORD_DECIMALS = 7
HOURS_DECIMALS = 6


class PlannerError(ValueError):
    pass


class UnreachableError(LookupError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Waypoint:
    id: str
    lat: float
    lon: float

    @property
    def point(self) -> tuple[float, float]:
        return (self.lat, self.lon)


def _read_waypoints(text: str, source: str) -> list[Waypoint]:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and not r[0].startswith("#")]
    if not rows or [c.strip() for c in rows[0]] != ["id", "lat", "lon"]:
        raise PlannerError(f"{source}: expected header 'id,lat,lon'")
    out: list[Waypoint] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise PlannerError(f"{source}:{lineno}: expected 3 fields, got {len(row)}")
        wid = row[0].strip()
        try:
            lat, lon = float(row[1]), float(row[2])
        except ValueError:
            raise PlannerError(f"{source}:{lineno}: non-numeric coordinate") from None
        if wid in seen:
            raise PlannerError(f"{source}:{lineno}: duplicate waypoint id {wid!r}")
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise PlannerError(f"{source}:{lineno}: coordinate out of range")
        seen.add(wid)
        out.append(Waypoint(wid, lat, lon))
    return out


def load_waypoints(path: str | Path | None = None) -> list[Waypoint]:
    """Waypoints from an ``id,lat,lon`` CSV; the bundled table when ``path`` is None."""
    if path is None:
        text = resources.files("icepath").joinpath("data/waypoints.csv").read_text(encoding="utf-8")
        return _read_waypoints(text, "waypoints.csv")
    return _read_waypoints(Path(path).read_text(encoding="utf-8"), str(path))


def write_waypoints(waypoints: Iterable[Waypoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon"])
        for wp in waypoints:
            w.writerow([wp.id, repr(wp.lat), repr(wp.lon)])


@dataclass(frozen=True, slots=True)
class RouteLeg:
    from_point: tuple[float, float]
    to_point: tuple[float, float]
    start_elapsed: float
    duration: float
    in_cell: str


@dataclass(frozen=True)
class Route:
    source: Waypoint
    destination: Waypoint
    planning_month: int
    legs: tuple[RouteLeg, ...]
    total_hours: float
    cells: tuple[str, ...] = ()

    @property
    def waypoints_visited(self) -> tuple[str, ...]:
        return (self.source.id, self.destination.id)

    @property
    def total_days(self) -> float:
        return self.total_hours / 24.0


def haversine_m(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _layer_centers(layer: MonthLayer) -> np.ndarray:
    cached = getattr(layer, "_centers", None)
    if cached is None:
        cached = np.array([leaf.center for leaf in layer.leaves], dtype=float)
        layer._centers = cached
    return cached


def locate_index(lat: float, lon: float, layer: MonthLayer) -> int:
    """Index of the leaf whose centre is nearest (great-circle) to ``(lat, lon)``.

    Distances within a micrometre count as ties, resolved by the smaller
    ``(lat, lon)`` centre.
    """
    centers = _layer_centers(layer)
    d = haversine_m(lat, lon, centers[:, 0], centers[:, 1])
    near = np.flatnonzero(d <= d.min() + TIE_TOL_M)
    if near.size == 1:
        return int(near[0])
    return int(min(near.tolist(), key=lambda k: (centers[k, 0], centers[k, 1])))


def locate_waypoint(wp: Waypoint, layer: MonthLayer) -> CellNode:
    return layer.leaves[locate_index(wp.lat, wp.lon, layer)]


def point_time(cell: CellNode, a: tuple[float, float], b: tuple[float, float], speed: float) -> float:
    """Seconds for a straight leg between two points under ``cell``'s current."""
    if a == b:
        return 0.0
    frame = LocalFrame.for_points(a, b)
    bx, by = frame.to_xy(*b)
    return segment_time(cell.avg_current, (bx, by), speed)


@dataclass(eq=False)
class LayerRouter:
    """Lazily evaluated crossing times for one layer at one vehicle speed."""

    layer: MonthLayer
    speed: float
    phi: float | None = None
    _cache: dict[tuple[int, int], TransitResult] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.speed > 0:
            raise PlannerError("speed must be positive")
        self.open = self.layer.open_mask(self.phi)

    def transit(self, i: int, j: int, kind: str) -> TransitResult:
        key = (i, j)
        hit = self._cache.get(key)
        if hit is None:
            leaves = self.layer.leaves
            hit = crossing(leaves[i], leaves[j], kind, self.speed)
            self._cache[key] = hit
        return hit

    def shortest_tree(self, source: int) -> tuple[list[float], list[int]]:
        """Dijkstra from leaf ``source`` over open leaves; costs in seconds."""
        n = len(self.layer.leaves)
        dist = [math.inf] * n
        pred = [-1] * n
        if not self.open[source]:
            return dist, pred
        dist[source] = 0.0
        heap = [(0.0, source)]
        done = [False] * n
        neighbors = self.layer.neighbors
        is_open = self.open
        while heap:
            d, i = heapq.heappop(heap)
            if done[i]:
                continue
            done[i] = True
            for j, kind in neighbors[i]:
                if done[j] or not is_open[j]:
                    continue
                res = self.transit(i, j, kind)
                if not res.feasible:
                    continue
                nd = d + res.total
                if nd < dist[j]:
                    dist[j] = nd
                    pred[j] = i
                    heapq.heappush(heap, (nd, j))
        return dist, pred


def _cell_path(pred: Sequence[int], target: int) -> list[int]:
    path = [target]
    while pred[path[-1]] != -1:
        path.append(pred[path[-1]])
    path.reverse()
    return path


def _route_from_cells(router: LayerRouter, src: Waypoint, dst: Waypoint, cells: Sequence[int],
                      month: int) -> Route:
    leaves = router.layer.leaves
    pieces: list[tuple[tuple[float, float], tuple[float, float], float, str]] = []
    first = leaves[cells[0]]
    if src.point != first.center:
        pieces.append((src.point, first.center, point_time(first, src.point, first.center, router.speed),
                       first.key))
    for i, j in zip(cells, cells[1:]):
        kind = next(k for m, k in router.layer.neighbors[i] if m == j)
        res = router.transit(i, j, kind)
        cp = res.crossing_point
        pieces.append((leaves[i].center, cp, res.t1, leaves[i].key))
        pieces.append((cp, leaves[j].center, res.t2, leaves[j].key))
    last = leaves[cells[-1]]
    if dst.point != last.center:
        pieces.append((last.center, dst.point, point_time(last, last.center, dst.point, router.speed),
                       last.key))
    legs = []
    elapsed = 0.0
    for a, b, secs, key in pieces:
        hours = secs / 3600.0
        legs.append(RouteLeg(a, b, elapsed, hours, key))
        elapsed += hours
    total = math.fsum(leg.duration for leg in legs)
    return Route(src, dst, month, tuple(legs), total, tuple(leaves[c].key for c in cells))


def _endpoint_reason(router: LayerRouter, k: int, role: str) -> str | None:
    cls = router.layer.classes[k]
    if cls is CellClass.LAND:
        return f"{role} on land"
    if not router.open[k]:
        return f"{role} ice-locked"
    return None


def plan_route(src: Waypoint, dst: Waypoint, layer: MonthLayer, speed: float, phi: float | None = None,
               router: LayerRouter | None = None) -> Route:
    """Time-optimal route from ``src`` to ``dst`` within one month layer.

    ``speed`` is in m/s.  Leaves with month-mean ice above ``phi`` are never
    entered.  Raises :class:`UnreachableError` with a reason otherwise.
    """
    if router is None:
        router = LayerRouter(layer, speed, phi)
    if src.point == dst.point:
        return Route(src, dst, layer.month, (), 0.0, ())
    a = locate_index(src.lat, src.lon, layer)
    b = locate_index(dst.lat, dst.lon, layer)
    for k, role in ((a, "source"), (b, "destination")):
        reason = _endpoint_reason(router, k, role)
        if reason:
            raise UnreachableError(reason)
    leaves = layer.leaves
    t_in = point_time(leaves[a], src.point, leaves[a].center, speed)
    t_out = point_time(leaves[b], leaves[b].center, dst.point, speed)
    if t_in == math.inf:
        raise UnreachableError("source leg against current")
    if t_out == math.inf:
        raise UnreachableError("destination leg against current")
    dist, pred = router.shortest_tree(a)
    if dist[b] == math.inf:
        raise UnreachableError("no connected path")
    return _route_from_cells(router, src, dst, _cell_path(pred, b), layer.month)


# ---------------------------------------------------------------------------
# path-book


@dataclass(eq=False)
class PathBook:
    """Routes keyed by ``(month, source id, destination id)``; absent means unreachable."""

    config: dict
    waypoints: list[Waypoint]
    routes: dict[tuple[int, str, str], Route] = field(default_factory=dict)
    # (month, waypoint id) -> located leaf is enterable
    access: dict[tuple[int, str], bool] = field(default_factory=dict)
    months: tuple[int, ...] = tuple(range(1, 13))

    def get(self, month: int, src: str, dst: str) -> Route | None:
        return self.routes.get((month, src, dst))

    def __len__(self) -> int:
        return len(self.routes)

    def __iter__(self) -> Iterator[tuple[tuple[int, str, str], Route]]:
        for key in sorted(self.routes, key=self._order):
            yield key, self.routes[key]

    def _order(self, key: tuple[int, str, str]) -> tuple[int, int, int]:
        idx = self._index
        return (key[0], idx[key[1]], idx[key[2]])

    @property
    def _index(self) -> dict[str, int]:
        return {wp.id: k for k, wp in enumerate(self.waypoints)}

    def is_open(self, wp_id: str, month: int) -> bool:
        return self.access.get((month, wp_id), False)

    def route_count(self) -> int:
        return len(self.routes)


def build_pathbook(layers: Sequence[MonthLayer], waypoints: Sequence[Waypoint], speed: float,
                   phi: float | None = None, config: dict | None = None) -> PathBook:
    """All-pairs single-month routes, one Dijkstra per (month, source)."""
    ids = [wp.id for wp in waypoints]
    if len(set(ids)) != len(ids):
        raise PlannerError("duplicate waypoint ids")
    book = PathBook(dict(config or {}), list(waypoints), months=tuple(layer.month for layer in layers))
    for layer in layers:
        router = LayerRouter(layer, speed, phi)
        leaves = layer.leaves
        cell_of = [locate_index(wp.lat, wp.lon, layer) for wp in waypoints]
        enter = []
        exit_ = []
        for wp, k in zip(waypoints, cell_of):
            open_ = router.open[k]
            book.access[(layer.month, wp.id)] = bool(open_)
            enter.append(open_ and point_time(leaves[k], wp.point, leaves[k].center, speed) < math.inf)
            exit_.append(open_ and point_time(leaves[k], leaves[k].center, wp.point, speed) < math.inf)
        trees: dict[int, tuple[list[float], list[int]]] = {}
        for si, src in enumerate(waypoints):
            if not enter[si]:
                continue
            a = cell_of[si]
            if a not in trees:
                trees[a] = router.shortest_tree(a)
            dist, pred = trees[a]
            for di, dst in enumerate(waypoints):
                if di == si or not exit_[di] or dist[cell_of[di]] == math.inf:
                    continue
                if src.point == dst.point:
                    route = Route(src, dst, layer.month, (), 0.0, ())
                else:
                    route = _route_from_cells(router, src, dst, _cell_path(pred, cell_of[di]), layer.month)
                book.routes[(layer.month, src.id, dst.id)] = route
    return book


# ---------------------------------------------------------------------------
# serialisation


def _rc(x: float) -> float:
    return round(float(x), COORD_DECIMALS)


def _rh(x: float) -> float:
    return round(float(x), HOURS_DECIMALS)


def route_record(route: Route) -> dict:
    return {
        "type": "route",
        "month": route.planning_month,
        "src": route.source.id,
        "dst": route.destination.id,
        "total_hours": _rh(route.total_hours),
        "cells": list(route.cells),
        "legs": [
            [_rc(l.from_point[0]), _rc(l.from_point[1]), _rc(l.to_point[0]), _rc(l.to_point[1]),
             _rh(l.start_elapsed), _rh(l.duration), l.in_cell]
            for l in route.legs
        ],
    }


def route_from_record(rec: dict, by_id: dict[str, Waypoint]) -> Route:
    legs = tuple(
        RouteLeg((a, b), (c, d), start, dur, cell) for a, b, c, d, start, dur, cell in rec["legs"]
    )
    return Route(by_id[rec["src"]], by_id[rec["dst"]], int(rec["month"]), legs,
                 float(rec["total_hours"]), tuple(rec.get("cells", ())))


def pathbook_lines(book: PathBook) -> Iterator[str]:
    dump = lambda obj: json.dumps(obj, sort_keys=True, separators=(",", ":"))  # noqa: E731
    yield dump({
        "type": "header",
        "config": book.config,
        "months": list(book.months),
        "waypoints": [[wp.id, wp.lat, wp.lon] for wp in book.waypoints],
    })
    for month in book.months:
        yield dump({
            "type": "access",
            "month": month,
            "open": [wp.id for wp in book.waypoints if book.access.get((month, wp.id), False)],
        })
    for _, route in book:
        yield dump(route_record(route))


def write_pathbook(book: PathBook, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in pathbook_lines(book):
            fh.write(line + "\n")


def read_pathbook(path: str | Path) -> PathBook:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise PlannerError(f"{path}: empty path-book")
    head = json.loads(lines[0])
    if head.get("type") != "header":
        raise PlannerError(f"{path}: missing header record")
    waypoints = [Waypoint(i, float(a), float(b)) for i, a, b in head["waypoints"]]
    by_id = {wp.id: wp for wp in waypoints}
    book = PathBook(head["config"], waypoints, months=tuple(head["months"]))
    for wp in waypoints:
        for m in book.months:
            book.access[(m, wp.id)] = False
    for lineno, line in enumerate(lines[1:], start=2):
        rec = json.loads(line)
        kind = rec.get("type")
        if kind == "access":
            for wid in rec["open"]:
                book.access[(int(rec["month"]), wid)] = True
        elif kind == "route":
            route = route_from_record(rec, by_id)
            book.routes[(route.planning_month, route.source.id, route.destination.id)] = route
        else:
            raise PlannerError(f"{path}:{lineno}: unknown record type {kind!r}")
    return book


def route_geojson(route: Route, properties: dict | None = None) -> dict:
    """LineString feature with per-leg times in hours."""
    coords: list[list[float]] = []
    if route.legs:
        coords.append([_rc(route.legs[0].from_point[1]), _rc(route.legs[0].from_point[0])])
        coords.extend([_rc(l.to_point[1]), _rc(l.to_point[0])] for l in route.legs)
    else:
        coords = [[_rc(route.source.lon), _rc(route.source.lat)]] * 2
    props = {
        "src": route.source.id,
        "dst": route.destination.id,
        "month": route.planning_month,
        "total_hours": _rh(route.total_hours),
        "leg_hours": [_rh(l.duration) for l in route.legs],
        "leg_cells": [l.in_cell for l in route.legs],
    }
    if properties:
        props.update(properties)
    return {"type": "Feature", "geometry": {"type": "LineString", "coordinates": coords}, "properties": props}
