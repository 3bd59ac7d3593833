"""Travel time between adjacent cells through piecewise-constant currents.

Within a cell the vehicle holds a constant ground track, so the time to cover
displacement ``d`` at water speed ``s`` in current ``u`` solves
``(s^2 - |u|^2) t^2 + 2 (u.d) t - |d|^2 = 0``.  Crossing between side-adjacent
cells is normalised to a left-to-right arrangement and the crossing ordinate on
the shared edge is chosen to minimise the summed time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .env_data import Bounds
from .mesh import CellNode

M_PER_DEG = 111_320.0
# |s^2 - |u|^2| below this fraction of s^2 is treated as the matched-speed case
MATCHED_SPEED_RTOL = 1e-12
NEWTON_MAX_ITER = 50
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class TransitError(ValueError):
    pass


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular plane around ``origin`` scaled at ``mid_lat``."""

    origin_lat: float
    origin_lon: float
    mid_lat: float

    def __post_init__(self) -> None:
        if not abs(self.mid_lat) < 90.0:
            raise TransitError("mid-latitude must be strictly inside (-90, 90)")

    @classmethod
    def for_points(cls, a: tuple[float, float], b: tuple[float, float]) -> LocalFrame:
        return cls(a[0], a[1], 0.5 * (a[0] + b[0]))

    @classmethod
    def for_cells(cls, a: CellNode, b: CellNode) -> LocalFrame:
        return cls.for_points(a.center, b.center)

    @property
    def north_scale(self) -> float:
        return M_PER_DEG

    @property
    def east_scale(self) -> float:
        return M_PER_DEG * math.cos(math.radians(self.mid_lat))

    def to_xy(self, lat: float, lon: float) -> tuple[float, float]:
        return ((lon - self.origin_lon) * self.east_scale, (lat - self.origin_lat) * self.north_scale)

    def to_latlon(self, x: float, y: float) -> tuple[float, float]:
        return (self.origin_lat + y / self.north_scale, self.origin_lon + x / self.east_scale)


def _leg_time(ux: float, uy: float, dx: float, dy: float, s: float) -> float:
    dd = dx * dx + dy * dy
    dot = ux * dx + uy * dy
    c = s * s - (ux * ux + uy * uy)
    if abs(c) <= MATCHED_SPEED_RTOL * s * s:
        return dd / dot if dot > 0.0 else math.inf
    disc = dot * dot + dd * c
    if disc < 0.0:
        return math.inf
    # rationalised form of (sqrt(disc) - dot) / c; same root, no cancellation
    denom = math.sqrt(disc) + dot
    if denom <= 0.0:
        return math.inf
    t = dd / denom
    return t if 0.0 < t < math.inf else math.inf


def segment_time(u: tuple[float, float], d: tuple[float, float], s: float) -> float:
    """Seconds to cover displacement ``d`` (m) at water speed ``s`` in current ``u``.

    Returns ``math.inf`` when the vehicle cannot make good along ``d``.  When
    ``s == |u|`` the quadratic degenerates and ``|d|^2 / (u.d)`` is used.
    """
    if d[0] == 0.0 and d[1] == 0.0:
        raise TransitError("zero-length displacement")
    if s <= 0.0:
        raise TransitError("speed must be positive")
    return _leg_time(u[0], u[1], d[0], d[1], s)


@dataclass(frozen=True)
class CrossingCase:
    """Left-to-right crossing: left centre at the origin, shared edge at ``x``.

    ``a`` is the right cell's half-width, ``Y`` its centre's offset above the
    left centre.  ``quarter_turns`` and ``frame`` let a result be mapped back
    to geographic coordinates.
    """

    x: float
    a: float
    Y: float
    u1: float
    v1: float
    u2: float
    v2: float
    s: float
    edge_lo: float
    edge_hi: float
    quarter_turns: int = 0
    frame: LocalFrame | None = None

    def __post_init__(self) -> None:
        if not (self.x > 0 and self.a > 0):
            raise TransitError("half-widths must be positive")
        if not self.edge_lo < self.edge_hi:
            raise TransitError("empty shared edge")
        if not self.s > 0:
            raise TransitError("speed must be positive")

    def t1(self, y: float) -> float:
        return _leg_time(self.u1, self.v1, self.x, y, self.s)

    def t2(self, y: float) -> float:
        return _leg_time(self.u2, self.v2, self.a, self.Y - y, self.s)

    def total(self, y: float) -> float:
        return self.t1(y) + self.t2(y)

    def stationarity(self, y: float) -> float:
        """``X1 X2 (t1' + t2')`` in closed form; NaN where either leg is infeasible."""
        t1 = self.t1(y)
        t2 = self.t2(y)
        if t1 == math.inf or t2 == math.inf:
            return math.nan
        s2 = self.s * self.s
        c1 = s2 - self.u1 * self.u1 - self.v1 * self.v1
        c2 = s2 - self.u2 * self.u2 - self.v2 * self.v2
        d1 = self.x * self.u1 + y * self.v1
        b = self.Y - y
        d2 = self.a * self.u2 + b * self.v2
        x1 = math.sqrt(max(d1 * d1 + c1 * (self.x * self.x + y * y), 0.0))
        x2 = math.sqrt(max(d2 * d2 + c2 * (self.a * self.a + b * b), 0.0))
        return x1 * (y - self.Y + self.v2 * t2) + x2 * (y - self.v1 * t1)

    def to_geo(self, cx: float, cy: float) -> tuple[float, float] | None:
        if self.frame is None:
            return None
        ex, ny = _rotate(-self.quarter_turns, cx, cy)
        return self.frame.to_latlon(ex, ny)


@dataclass(frozen=True)
class TransitResult:
    yval: float
    t1: float
    t2: float
    total: float
    feasible: bool
    crossing_point: tuple[float, float] | None = None
    method: str = ""


INFEASIBLE = TransitResult(math.nan, math.inf, math.inf, math.inf, False, None, "infeasible")


def _rotate(k: int, a: float, b: float) -> tuple[float, float]:
    k %= 4
    if k == 0:
        return a, b
    if k == 1:
        return -b, a
    if k == 2:
        return -a, -b
    return b, -a


# ---------------------------------------------------------------------------
# optimisation


def _newton(f: Callable[[float], float], y0: float, lo: float, hi: float, length: float) -> float | None:
    """Newton on ``f`` with a central-difference slope; None on any safeguard trip."""
    h = 1e-4 * length
    tol = 1e-6 * length
    y = y0
    for _ in range(NEWTON_MAX_ITER):
        fy = f(y)
        if not math.isfinite(fy):
            return None
        if fy == 0.0:
            return y
        slope = (f(y + h) - f(y - h)) / (2.0 * h)
        if not math.isfinite(slope) or slope <= 0.0:
            return None
        y_new = y - fy / slope
        if not lo <= y_new <= hi:
            return None
        if abs(y_new - y) < tol:
            return y_new
        y = y_new
    return None


def _golden_section(fn: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def _feasible_interval(case: CrossingCase, lo: float, hi: float) -> tuple[float, float] | None:
    """Sub-interval of the edge on which both legs are feasible.

    Each leg's feasible set is a convex cone, so the intersection with the edge
    is an interval; it is located by sampling and its ends refined by bisection.
    """
    def ok(y: float) -> bool:
        return case.total(y) < math.inf

    for n in (129, 2049):
        ys = [lo + (hi - lo) * k / (n - 1) for k in range(n)]
        good = [k for k, y in enumerate(ys) if ok(y)]
        if good:
            break
    else:
        return None
    first, last = good[0], good[-1]

    def refine(bad: float, fine: float) -> float:
        for _ in range(60):
            mid = 0.5 * (bad + fine)
            if ok(mid):
                fine = mid
            else:
                bad = mid
        return fine

    left = ys[first] if first == 0 else refine(ys[first - 1], ys[first])
    right = ys[last] if last == n - 1 else refine(ys[last + 1], ys[last])
    return left, right


def optimal_crossing(case: CrossingCase) -> TransitResult:
    """Crossing ordinate on ``[edge_lo, edge_hi]`` minimising ``t1 + t2``.

    Newton iteration on the closed-form stationarity function, started from the
    straight centre-to-centre line; golden-section search over the feasible part
    of the edge whenever Newton leaves it, stalls, or meets a bad slope.
    """
    lo, hi = case.edge_lo, case.edge_hi
    length = hi - lo
    s = case.s
    if s > math.hypot(case.u1, case.v1) and s > math.hypot(case.u2, case.v2):
        dlo, dhi = lo, hi
    else:
        interval = _feasible_interval(case, lo, hi)
        if interval is None:
            return INFEASIBLE
        dlo, dhi = interval

    y0 = min(max(case.Y * case.x / (case.x + case.a), dlo), dhi)
    method = "newton"
    y = None
    if dhi > dlo:
        y = _newton(case.stationarity, y0, dlo, dhi, length)
        if y is None:
            method = "golden"
            y = _golden_section(case.total, dlo, dhi, 1e-10 * length)
    else:
        y = dlo
        method = "point"

    best_y, best_t = y, case.total(y)
    for cand in (dlo, dhi):
        tc = case.total(cand)
        if tc < best_t:
            best_y, best_t, method = cand, tc, "endpoint"
    if not best_t < math.inf:
        return INFEASIBLE
    t1, t2 = case.t1(best_y), case.t2(best_y)
    return TransitResult(best_y, t1, t2, t1 + t2, True, case.to_geo(case.x, best_y), method)


# ---------------------------------------------------------------------------
# cell geometry


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def side_direction(a: Bounds, b: Bounds) -> int:
    """Quarter turns taking the A-to-B travel direction onto +x; error unless side-adjacent."""
    if _close(a.lon_hi, b.lon_lo) or _close(a.lon_lo, b.lon_hi):
        overlap = min(a.lat_hi, b.lat_hi) - max(a.lat_lo, b.lat_lo)
        k = 0 if _close(a.lon_hi, b.lon_lo) else 2
    elif _close(a.lat_hi, b.lat_lo) or _close(a.lat_lo, b.lat_hi):
        overlap = min(a.lon_hi, b.lon_hi) - max(a.lon_lo, b.lon_lo)
        k = 3 if _close(a.lat_hi, b.lat_lo) else 1
    else:
        raise TransitError("cells are not side-adjacent")
    if overlap <= 1e-12:
        raise TransitError("cells are not side-adjacent")
    return k


def normalize_case(cell_a: CellNode, cell_b: CellNode, frame: LocalFrame, speed: float) -> CrossingCase:
    """Rotate a side-adjacent pair so travel runs left to right from A's centre."""
    ba, bb = cell_a.bounds, cell_b.bounds
    k = side_direction(ba, bb)
    pa = frame.to_xy(*cell_a.center)
    pb = frame.to_xy(*cell_b.center)
    if k in (0, 2):
        edge_lon = ba.lon_hi if k == 0 else ba.lon_lo
        ends = [(max(ba.lat_lo, bb.lat_lo), edge_lon), (min(ba.lat_hi, bb.lat_hi), edge_lon)]
    else:
        edge_lat = ba.lat_hi if k == 3 else ba.lat_lo
        ends = [(edge_lat, max(ba.lon_lo, bb.lon_lo)), (edge_lat, min(ba.lon_hi, bb.lon_hi))]

    def canon(lat: float, lon: float) -> tuple[float, float]:
        ex, ny = frame.to_xy(lat, lon)
        return _rotate(k, ex - pa[0], ny - pa[1])

    e0 = canon(*ends[0])
    e1 = canon(*ends[1])
    bx, by = _rotate(k, pb[0] - pa[0], pb[1] - pa[1])
    x = e0[0]
    u1, v1 = _rotate(k, *cell_a.avg_current)
    u2, v2 = _rotate(k, *cell_b.avg_current)
    shifted = LocalFrame(*frame.to_latlon(*pa), frame.mid_lat) if pa != (0.0, 0.0) else frame
    return CrossingCase(
        x=x, a=bx - x, Y=by, u1=u1, v1=v1, u2=u2, v2=v2, s=speed,
        edge_lo=min(e0[1], e1[1]), edge_hi=max(e0[1], e1[1]),
        quarter_turns=k, frame=shifted,
    )


def shared_corner(a: Bounds, b: Bounds) -> tuple[float, float]:
    for lat in (a.lat_lo, a.lat_hi):
        for lon in (a.lon_lo, a.lon_hi):
            for blat in (b.lat_lo, b.lat_hi):
                for blon in (b.lon_lo, b.lon_hi):
                    if _close(lat, blat) and _close(lon, blon):
                        return lat, lon
    raise TransitError("cells do not share a corner")


def diagonal_time(cell_a: CellNode, cell_b: CellNode, frame: LocalFrame, speed: float) -> TransitResult:
    """Fixed two-leg path centre -> shared corner -> centre."""
    corner = shared_corner(cell_a.bounds, cell_b.bounds)
    pa = frame.to_xy(*cell_a.center)
    pb = frame.to_xy(*cell_b.center)
    pc = frame.to_xy(*corner)
    t1 = segment_time(cell_a.avg_current, (pc[0] - pa[0], pc[1] - pa[1]), speed)
    t2 = segment_time(cell_b.avg_current, (pb[0] - pc[0], pb[1] - pc[1]), speed)
    if t1 == math.inf or t2 == math.inf:
        return INFEASIBLE
    return TransitResult(0.0, t1, t2, t1 + t2, True, corner, "diagonal")


def crossing(cell_a: CellNode, cell_b: CellNode, kind: str, speed: float) -> TransitResult:
    """Optimal transit from A's centre to B's centre for an adjacency of ``kind``."""
    frame = LocalFrame.for_cells(cell_a, cell_b)
    if kind == "corner":
        return diagonal_time(cell_a, cell_b, frame, speed)
    return optimal_crossing(normalize_case(cell_a, cell_b, frame, speed))


def time_curve(case: CrossingCase, n: int = 101) -> list[tuple[float, float, float, float]]:
    """``(y, t1, t2, total)`` sampled evenly along the shared edge."""
    rows = []
    for k in range(n):
        y = case.edge_lo + (case.edge_hi - case.edge_lo) * k / (n - 1)
        t1, t2 = case.t1(y), case.t2(y)
        rows.append((y, t1, t2, t1 + t2))
    return rows
