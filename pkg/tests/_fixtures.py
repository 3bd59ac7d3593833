"""Small hand-built datasets, layers and path-books shared by the tests."""

from __future__ import annotations

import numpy as np

from icepath.env_data import DAYS_PER_YEAR, Bounds, EnvDataset, IceStats, RegionSpec
from icepath.mesh import CellClass, CellNode, MonthLayer, assemble_layer, classify_cell_month
from icepath.planner import PathBook, Route, RouteLeg, Waypoint


def full(region: RegionSpec, value) -> np.ndarray:
    return np.full((DAYS_PER_YEAR, region.n_lat, region.n_lon), value, dtype=float)


def dataset(region: RegionSpec, ice=0.0, u=0.0, v=0.0, year: str = "fixture") -> EnvDataset:
    """Dataset with scalar or array-valued fields broadcast to the full shape."""
    shape = (DAYS_PER_YEAR, region.n_lat, region.n_lon)
    arrays = []
    for value in (u, v, ice):
        arr = np.array(np.broadcast_to(np.asarray(value, dtype=float), shape))
        arrays.append(arr)
    return EnvDataset(region, year, *arrays)


def leaf(lat_lo: float, lat_hi: float, lon_lo: float, lon_hi: float, *, depth: int = 0, row: int = 0,
         col: int = 0, path: tuple[int, ...] = (), current=(0.0, 0.0), ice_mean: float = 0.0,
         land: bool = False) -> CellNode:
    stats = IceStats(ice_mean, 0.0, 100, 1.0 if ice_mean > 0.04 else 0.0)
    return CellNode(Bounds(lat_lo, lat_hi, lon_lo, lon_hi), depth, row, col, path, tuple(current), 100, land,
                    tuple(stats for _ in range(12)))


def layer(leaves, origin_lat: float, origin_lon: float, cell_w: float, cell_h: float, month: int = 1,
          phi: float = 0.08) -> MonthLayer:
    classes = [classify_cell_month(c, month, phi) for c in leaves]
    return assemble_layer(month, leaves, classes, origin_lat, origin_lon, cell_w, cell_h, phi)


def uniform_grid_leaves(rows: int, cols: int, cell_w: float, cell_h: float, lat0: float = -62.0,
                        lon0: float = -40.0, **kw) -> list[CellNode]:
    out = []
    for r in range(rows):
        for c in range(cols):
            out.append(leaf(lat0 + r * cell_h, lat0 + (r + 1) * cell_h, lon0 + c * cell_w,
                            lon0 + (c + 1) * cell_w, row=r, col=c, **kw))
    return out


def split_leaves(bounds: Bounds, depth: int, row: int = 0, col: int = 0, **kw) -> list[CellNode]:
    """All leaves of ``bounds`` refined uniformly to ``depth``."""
    stack = [(bounds, ())]
    for _ in range(depth):
        stack = [(q, p + (k,)) for b, p in stack for k, q in enumerate(b.quarters())]
    return [leaf(b.lat_lo, b.lat_hi, b.lon_lo, b.lon_hi, depth=depth, row=row, col=col, path=p, **kw)
            for b, p in stack]


def random_leaves(rng: np.random.Generator, rows: int, cols: int, *, max_depth: int = 2, p_split: float = 0.3,
                  lat0: float = -62.0, lon0: float = -40.0, cell_w: float = 2.0, cell_h: float = 1.0,
                  max_current: float = 0.3, p_ice: float = 0.15, max_leaves: int | None = None) -> list[CellNode]:
    """Random quadtree tiling with random currents and some ice-covered leaves."""
    while True:
        out: list[CellNode] = []

        def rec(b: Bounds, depth: int, r: int, c: int, path: tuple[int, ...]) -> None:
            if depth < max_depth and rng.random() < p_split:
                for k, q in enumerate(b.quarters()):
                    rec(q, depth + 1, r, c, path + (k,))
                return
            speed = rng.uniform(0.0, max_current)
            ang = rng.uniform(0.0, 2 * np.pi)
            ice = 0.5 if rng.random() < p_ice else float(rng.uniform(0.0, 0.07))
            out.append(leaf(b.lat_lo, b.lat_hi, b.lon_lo, b.lon_hi, depth=depth, row=r, col=c, path=path,
                            current=(speed * np.cos(ang), speed * np.sin(ang)), ice_mean=ice))

        for r in range(rows):
            for c in range(cols):
                rec(Bounds(lat0 + r * cell_h, lat0 + (r + 1) * cell_h, lon0 + c * cell_w, lon0 + (c + 1) * cell_w),
                    0, r, c, ())
        if max_leaves is None or len(out) <= max_leaves:
            return out


def brute_force_seconds(router, a: int, b: int) -> float:
    """Minimum transit time over every simple open-leaf path from leaf ``a`` to leaf ``b``."""
    import math

    if not (router.open[a] and router.open[b]):
        return math.inf
    best = math.inf
    neighbors = router.layer.neighbors
    seen = {a}

    def dfs(i: int, acc: float) -> None:
        nonlocal best
        if i == b:
            best = min(best, acc)
            return
        for j, kind in neighbors[i]:
            if j in seen or not router.open[j]:
                continue
            res = router.transit(i, j, kind)
            if not res.feasible:
                continue
            seen.add(j)
            dfs(j, acc + res.total)
            seen.discard(j)

    dfs(a, 0.0)
    return best


def one_leg_route(src: Waypoint, dst: Waypoint, month: int, hours: float) -> Route:
    leg = RouteLeg(src.point, dst.point, 0.0, hours, "x")
    return Route(src, dst, month, (leg,), hours, ("x",))


def table_pathbook(ids, days: dict[tuple[int, str, str], float],
                   open_: dict[tuple[int, str], bool] | None = None) -> PathBook:
    """Path-book from a duration table; every waypoint open unless stated.

    As in a planned path-book, a month's route is kept only when both ends are
    open that month.
    """
    wps = [Waypoint(w, -60.0 - k, -40.0 + k) for k, w in enumerate(ids)]
    by_id = {w.id: w for w in wps}
    book = PathBook({}, wps)
    for m in range(1, 13):
        for w in ids:
            book.access[(m, w)] = True if open_ is None else open_.get((m, w), True)
    for (m, a, b), d in days.items():
        if not (book.access[(m, a)] and book.access[(m, b)]):
            continue
        book.routes[(m, a, b)] = one_leg_route(by_id[a], by_id[b], m, d * 24.0)
    return book


def wait_fixture() -> PathBook:
    """C reaches A in 10 days in January; A reaches B in 12 days only in February.

    A is open in January and February only, so the best C -> B journey starts in
    January, waits at A for the rest of the month and arrives on day 43.
    """
    open_ = {(m, "A"): m in (1, 2) for m in range(1, 13)}
    return table_pathbook(["C", "A", "B"], {(1, "C", "A"): 10.0, (2, "A", "B"): 12.0}, open_)


def brute_force_journey_days(book: PathBook, init: str, goal: str, horizon: int,
                             max_route_days: float = 30.0, starts=range(1, 13)) -> float:
    """Shortest journey by depth-first enumeration of every admissible edge sequence.

    Works from the path-book directly and prunes only on the best total so far.
    """
    import math

    from icepath.env_data import MONTH_LENGTHS

    best = math.inf
    for start in starts:
        ends = []
        acc = 0
        for k in range(horizon):
            acc += MONTH_LENGTHS[(start - 1 + k) % 12]
            ends.append(acc)

        def month(k: int) -> int:
            return (start - 1 + k) % 12 + 1

        def dfs(wp: str, k: int, t: float) -> None:
            nonlocal best
            if t >= best:
                return
            if wp == goal:
                best = t
                return
            m = month(k)
            end = ends[k]
            if k + 1 < horizon and book.access.get((m, wp), False) and book.access.get((month(k + 1), wp), False):
                dfs(wp, k + 1, max(t, end))
            if t >= end:
                return
            for (rm, a, b), route in book.routes.items():
                if rm != m or a != wp:
                    continue
                r = round(route.total_hours, 6) / 24.0
                if r > max_route_days:
                    continue
                if t + r < end:
                    dfs(b, k, t + r)
                elif k + 1 < horizon:
                    dfs(b, k + 1, t + r)

        dfs(init, 0, 0.0)
    return best


__all__ = [
    "CellClass", "brute_force_journey_days", "brute_force_seconds", "dataset", "full", "layer", "leaf", "one_leg_route", "random_leaves", "split_leaves",
    "table_pathbook", "uniform_grid_leaves", "wait_fixture",
]
