"""Multi-month journeys stitched from path-book routes, with waiting.

A journey starting in calendar month ``i`` keeps a clock of elapsed days from
the first day of that month.  Month slot ``k`` (0-based, up to the horizon)
ends at ``end(k)``, the summed lengths of months ``i .. i+k``.  From state
``(wp, k)`` at time ``T``:

* a same-month travel edge needs ``T < end(k)`` and ``T + r < end(k)``;
* a next-month travel edge needs ``T < end(k)`` and ``T + r >= end(k)``;
* a wait edge moves to ``(wp, k+1)`` at time ``max(T, end(k))`` and exists only
  when ``wp`` is open in both calendar months.

Travel edges use routes of at most 30 days planned in slot ``k``'s calendar
month, and only between waypoints open in that month (a planned path-book
never holds anything else).  An earliest-arrival search over these states is
then exact for the final arrival time: an early arrival that cannot take a
next-month edge can take the same-month edge instead, so ``wp2`` is open in
month ``k``, and then wait, because any continuation from ``(wp2, k+1)``
implies ``wp2`` is open in that month too.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .env_data import MONTH_LENGTHS, MONTH_NAMES
from .planner import HOURS_DECIMALS, PathBook, Route, route_geojson

MAX_ROUTE_DAYS = 30.0
HORIZON_MONTHS = 24

TRAVEL_SAME = "travel_same_month"
TRAVEL_NEXT = "travel_next_month"
WAIT = "wait"


class ComposeError(ValueError):
    pass


def next_month(m: int) -> int:
    return m % 12 + 1


def route_days(route: Route) -> float:
    """Route duration in days as recorded in the path-book (hours rounded)."""
    return round(route.total_hours, HOURS_DECIMALS) / 24.0


@dataclass(frozen=True)
class MetaEdge:
    kind: str
    src: str
    dst: str
    month: int
    to_month: int
    days: float
    route: Route | None = None


@dataclass(eq=False)
class YearGraph:
    waypoints: list[str]
    # (wp, month) -> outgoing edges
    edges: dict[tuple[str, int], list[MetaEdge]] = field(default_factory=dict)
    access: dict[tuple[str, int], bool] = field(default_factory=dict)

    def out(self, wp: str, month: int) -> list[MetaEdge]:
        return self.edges.get((wp, month), [])

    def all_edges(self) -> Iterable[MetaEdge]:
        for key in sorted(self.edges, key=lambda k: (k[1], self.waypoints.index(k[0]))):
            yield from self.edges[key]

    def has_edge(self, kind: str, src: str, month: int, dst: str, to_month: int) -> bool:
        return any(e.kind == kind and e.dst == dst and e.to_month == to_month for e in self.out(src, month))


def build_year_graph(pathbook: PathBook, accessibility: dict[tuple[int, str], bool] | None = None,
                     max_route_days: float = MAX_ROUTE_DAYS) -> YearGraph:
    """Meta-graph over ``(waypoint, month)``.

    ``accessibility`` maps ``(month, wp)`` to open/closed and defaults to the
    path-book's own record.  Travel edges leaving or entering a closed waypoint
    are dropped.
    """
    access = pathbook.access if accessibility is None else accessibility
    ids = [wp.id for wp in pathbook.waypoints]
    graph = YearGraph(ids)
    for m in range(1, 13):
        for wid in ids:
            graph.access[(wid, m)] = bool(access.get((m, wid), False))
    for (month, src, dst), route in pathbook:
        days = route_days(route)
        if days > max_route_days or not (graph.access[(src, month)] and graph.access[(dst, month)]):
            continue
        lst = graph.edges.setdefault((src, month), [])
        lst.append(MetaEdge(TRAVEL_SAME, src, dst, month, month, days, route))
        lst.append(MetaEdge(TRAVEL_NEXT, src, dst, month, next_month(month), days, route))
    for m in range(1, 13):
        nm = next_month(m)
        for wid in ids:
            if graph.access[(wid, m)] and graph.access[(wid, nm)]:
                # duration depends on the arrival day; fixed at search time
                graph.edges.setdefault((wid, m), []).append(MetaEdge(WAIT, wid, wid, m, nm, math.nan))
    return graph


@dataclass(frozen=True)
class JourneySegment:
    kind: str  # "travel" or "wait"
    src: str
    dst: str
    month: int
    month_index: int
    start_day: float
    days: float
    route: Route | None = None

    @property
    def end_day(self) -> float:
        return self.start_day + self.days


@dataclass(frozen=True)
class ComposedJourney:
    init: str
    goal: str
    start_month: int
    segments: tuple[JourneySegment, ...]
    total_days: float

    @property
    def travel_days(self) -> float:
        return math.fsum(s.days for s in self.segments if s.kind == "travel")

    @property
    def wait_days(self) -> float:
        return math.fsum(s.days for s in self.segments if s.kind == "wait")

    @property
    def waiting_months(self) -> int:
        return sum(1 for s in self.segments if s.kind == "wait" and s.days > 0)

    @property
    def travels(self) -> list[JourneySegment]:
        return [s for s in self.segments if s.kind == "travel"]

    @property
    def waypoints_visited(self) -> list[str]:
        out = [self.init]
        for s in self.travels:
            out.append(s.dst)
        return out


def month_ends(start_month: int, horizon: int) -> list[int]:
    ends = []
    total = 0
    for k in range(horizon):
        total += MONTH_LENGTHS[(start_month - 1 + k) % 12]
        ends.append(total)
    return ends


def _search(graph: YearGraph, init: str, goal: str, start_month: int,
            horizon: int) -> tuple[float, list[tuple[MetaEdge, int, float, float]]] | None:
    """Earliest arrival at ``goal`` from ``(init, slot 0)``; returns time and edge trail."""
    ends = month_ends(start_month, horizon)
    order = {w: k for k, w in enumerate(graph.waypoints)}
    best: dict[tuple[str, int], float] = {(init, 0): 0.0}
    back: dict[tuple[str, int], tuple[tuple[str, int], MetaEdge, float, float]] = {}
    heap = [(0.0, 0, order[init], init)]
    done: set[tuple[str, int]] = set()
    while heap:
        t, k, _, wp = heapq.heappop(heap)
        state = (wp, k)
        if state in done:
            continue
        done.add(state)
        if wp == goal:
            trail = []
            while state in back:
                prev, edge, dep, dur = back[state]
                trail.append((edge, prev[1], dep, dur))
                state = prev
            trail.reverse()
            return t, trail
        month = (start_month - 1 + k) % 12 + 1
        end = ends[k]
        for edge in graph.out(wp, month):
            if edge.kind == WAIT:
                if k + 1 >= horizon:
                    continue
                dur = max(0.0, end - t)
                nk = k + 1
            else:
                if t >= end:
                    continue
                dur = edge.days
                arrive = t + dur
                if edge.kind == TRAVEL_SAME:
                    if arrive >= end:
                        continue
                    nk = k
                else:
                    if arrive < end or k + 1 >= horizon:
                        continue
                    nk = k + 1
            nt = t + dur
            nstate = (edge.dst, nk)
            if nstate in done:
                continue
            old = best.get(nstate)
            if old is None or nt < old:
                best[nstate] = nt
                back[nstate] = ((wp, k), edge, t, dur)
                heapq.heappush(heap, (nt, nk, order[edge.dst], edge.dst))
    return None


def compose(init: str, goal: str, year_graph: YearGraph, start_month: int | None = None,
            horizon: int = HORIZON_MONTHS) -> ComposedJourney | None:
    """Minimum-duration journey from ``init`` to ``goal`` over all start months.

    Ties go to the earliest start month.  Returns None when the goal is not
    reachable within ``horizon`` months from any start.
    """
    for wid in (init, goal):
        if wid not in year_graph.waypoints:
            raise ComposeError(f"unknown waypoint {wid!r}")
    if horizon < 1:
        raise ComposeError("horizon must be at least one month")
    starts = range(1, 13) if start_month is None else (start_month,)
    best: tuple[float, int, list] | None = None
    for i in starts:
        found = _search(year_graph, init, goal, i, horizon)
        if found is None:
            continue
        t, trail = found
        if best is None or t < best[0]:
            best = (t, i, trail)
    if best is None:
        return None
    total, i, trail = best
    segments = []
    for edge, k, dep, dur in trail:
        if edge.kind == WAIT:
            segments.append(JourneySegment("wait", edge.src, edge.dst, edge.month, k, dep, dur))
        else:
            segments.append(JourneySegment("travel", edge.src, edge.dst, edge.month, k, dep, dur, edge.route))
    return ComposedJourney(init, goal, i, tuple(segments), total)


# ---------------------------------------------------------------------------
# rendering and export

TRAVEL_MARK = "|####|"
WAIT_MARK = "|~~~~|"


def _short(month: int) -> str:
    return MONTH_NAMES[month - 1][:3]


def render_calendar(journey: ComposedJourney, title: str | None = None) -> str:
    """One line per journey day: month label, day number, activity bar, waypoints.

    A day shows the travel bar if any travel happens during it, otherwise the
    wait bar.  Waypoints are listed on the day the vehicle leaves or reaches them.
    """
    name = title or f"{journey.init} -> {journey.goal}"
    head = [
        f"# journey {name}",
        f"# start {MONTH_NAMES[journey.start_month - 1]}  total {journey.total_days:.1f} days  "
        f"travel {journey.travel_days:.1f}  waiting {journey.waiting_months} months",
    ]
    n_days = math.ceil(journey.total_days - 1e-9) if journey.total_days > 0 else 0
    if n_days == 0:
        return "\n".join(head) + "\n"
    travel = [False] * n_days
    wait = [False] * n_days
    names: list[list[str]] = [[] for _ in range(n_days)]

    def day_of(t: float) -> int:
        return min(max(int(math.floor(t + 1e-9)), 0), n_days - 1)

    for seg in journey.segments:
        if seg.days <= 0:
            continue
        first = day_of(seg.start_day)
        last = min(max(math.ceil(seg.end_day - 1e-9) - 1, first), n_days - 1)
        flags = travel if seg.kind == "travel" else wait
        for d in range(first, last + 1):
            flags[d] = True
        if seg.kind == "travel":
            for wid, d in ((seg.src, first), (seg.dst, last)):
                if not names[d] or names[d][-1] != wid:
                    names[d].append(wid)

    lines = list(head)
    cal_month = None
    day_in_month = 0
    month_cursor = journey.start_month
    for d in range(n_days):
        label = ""
        if cal_month is None or day_in_month >= MONTH_LENGTHS[month_cursor - 1]:
            if cal_month is not None:
                month_cursor = month_cursor % 12 + 1
                day_in_month = 0
            cal_month = month_cursor
            label = _short(cal_month)
        day_in_month += 1
        mark = TRAVEL_MARK if travel[d] else WAIT_MARK if wait[d] else "|    |"
        right = ", ".join(names[d])
        lines.append(f"{label:<3} {day_in_month:>2} {mark} {right}".rstrip())
    return "\n".join(lines) + "\n"


def journey_record(journey: ComposedJourney, year: str = "") -> dict:
    return {
        "route": f"{journey.init} -> {journey.goal}",
        "year": year,
        "starting": MONTH_NAMES[journey.start_month - 1],
        "waiting": journey.waiting_months,
        "duration": round(journey.total_days, 6),
        "travel_days": round(journey.travel_days, 6),
        "segments": [
            {
                "kind": s.kind,
                "src": s.src,
                "dst": s.dst,
                "month": s.month,
                "month_index": s.month_index,
                "start_day": round(s.start_day, 6),
                "days": round(s.days, 6),
            }
            for s in journey.segments
        ],
    }


def journey_geojson(journey: ComposedJourney, config: dict | None = None) -> dict:
    features = []
    for n, seg in enumerate(journey.travels):
        features.append(route_geojson(seg.route, {
            "segment": n,
            "start_day": round(seg.start_day, 6),
            "planning_month": seg.month,
        }))
    out = {"type": "FeatureCollection", "features": features, "journey": journey_record(journey)}
    if config is not None:
        out["config"] = config
    return out


def dumps_journey(journey: ComposedJourney | None, init: str, goal: str, year: str = "",
                  config: dict | None = None) -> str:
    rec: dict = {"init": init, "goal": goal, "config": config or {}}
    rec["journey"] = None if journey is None else journey_record(journey, year)
    return json.dumps(rec, sort_keys=True, indent=1) + "\n"


def journeys_table(rows: Sequence[tuple[str, str, ComposedJourney | None]], year: str = "") -> list[str]:
    """CSV lines with the columns Route, Year, Starting, Waiting, Duration."""
    out = ["route,year,starting,waiting,duration"]
    for init, goal, j in rows:
        if j is None:
            out.append(f"{init} -> {goal},{year},,,")
        else:
            out.append(f"{init} -> {goal},{year},{MONTH_NAMES[j.start_month - 1]},{j.waiting_months},"
                       f"{j.total_days:.1f}")
    return out
