"""Replaying planned routes against daily ice to measure risk exposure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .env_data import DAYS_PER_YEAR, MONTH_START_DAY, EnvDataset
from .planner import PathBook, Route, RouteLeg

EARLY_WINDOW_DAYS = 30
HOURS_PER_DAY = 24.0


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    psi: float = 0.12
    rectangle_pad: int = 1
    start_day: int = 1
    start_hour: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.psi < 1.0:
            raise SimulationError(f"psi must be in (0, 1), got {self.psi}")
        if self.rectangle_pad < 0:
            raise SimulationError("rectangle_pad must be >= 0")
        if not 1 <= self.start_day <= DAYS_PER_YEAR:
            raise SimulationError(f"start_day must be in 1..365, got {self.start_day}")
        if not 0.0 <= self.start_hour < HOURS_PER_DAY:
            raise SimulationError("start_hour must be in [0, 24)")


@dataclass(frozen=True, slots=True)
class DayLeg:
    """Part of a route leg falling inside one simulated day."""

    sim_day: int  # 1 = the day travel starts
    from_point: tuple[float, float]
    to_point: tuple[float, float]
    start_elapsed: float
    duration: float
    in_cell: str


def _lerp(a: tuple[float, float], b: tuple[float, float], f: float) -> tuple[float, float]:
    return (a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f)


def split_legs_by_day(legs: Route | Sequence[RouteLeg], start_hour: float = 0.0) -> list[DayLeg]:
    """Cut legs at day boundaries, ``start_hour`` hours into the first day.

    Split points are linear interpolations along each leg.  The pieces of one
    leg share its endpoints, so the piece durations add back to the leg's.
    """
    if isinstance(legs, Route):
        legs = legs.legs
    out: list[DayLeg] = []
    for leg in legs:
        t0 = start_hour + leg.start_elapsed
        t1 = t0 + leg.duration
        cut = t0
        point = leg.from_point
        day = int(math.floor(t0 / HOURS_PER_DAY))
        while True:
            boundary = (day + 1) * HOURS_PER_DAY
            if boundary >= t1:
                out.append(DayLeg(day + 1, point, leg.to_point, cut - start_hour, t1 - cut, leg.in_cell))
                break
            nxt = _lerp(leg.from_point, leg.to_point, (boundary - t0) / leg.duration)
            out.append(DayLeg(day + 1, point, nxt, cut - start_hour, boundary - cut, leg.in_cell))
            cut, point = boundary, nxt
            day += 1
    return out


def leg_ice(dataset: EnvDataset, from_point: tuple[float, float], to_point: tuple[float, float],
            day: int, pad: int = 1) -> tuple[float | None, int]:
    """Mean ice on ``day`` inside the leg's padded lat/lon bounding rectangle.

    Returns ``(mean, count)``; the mean is None when no sample falls inside.
    """
    if not 1 <= day <= DAYS_PER_YEAR:
        raise SimulationError(f"day {day} outside the dataset's 1..{DAYS_PER_YEAR}")
    step = dataset.region.grid_step * pad
    lat_lo = min(from_point[0], to_point[0]) - step
    lat_hi = max(from_point[0], to_point[0]) + step
    lon_lo = min(from_point[1], to_point[1]) - step
    lon_hi = max(from_point[1], to_point[1]) + step
    i0, i1, j0, j1 = dataset.region.closed_index_box(lat_lo, lat_hi, lon_lo, lon_hi)
    if i0 >= i1 or j0 >= j1:
        return None, 0
    block = dataset.ice[day - 1, i0:i1, j0:j1]
    vals = block[~np.isnan(block)]
    if vals.size == 0:
        return None, 0
    return float(vals.mean()), int(vals.size)


@dataclass(frozen=True, slots=True)
class LegRisk:
    sim_day: int
    day: int
    hours: float
    mean_ice: float | None
    at_risk: bool

    @property
    def no_data(self) -> bool:
        return self.mean_ice is None


@dataclass(frozen=True)
class RiskReport:
    route_id: str
    planning_month: int
    planning_year: str
    simulation_year: str
    total_travel_hours: float
    risk_hours: float
    early_risk_hours: float
    legs: tuple[LegRisk, ...] = field(default=(), repr=False)

    @property
    def travel_days(self) -> float:
        return self.total_travel_hours / HOURS_PER_DAY

    @property
    def risk_days(self) -> float:
        return self.risk_hours / HOURS_PER_DAY

    @property
    def early_risk_days(self) -> float:
        return self.early_risk_hours / HOURS_PER_DAY

    @property
    def intra_year(self) -> bool:
        return self.planning_year == self.simulation_year

    @property
    def no_data_legs(self) -> int:
        return sum(1 for leg in self.legs if leg.no_data)


def route_id(route: Route) -> str:
    return f"{route.planning_month}:{route.source.id}->{route.destination.id}"


def simulate(route: Route, dataset: EnvDataset, config: SimConfig | None = None,
             planning_year: str | None = None) -> RiskReport:
    """Risk hours accumulated by ``route`` against the daily ice in ``dataset``.

    A day-aligned piece is at risk when its rectangle mean exceeds ``psi``;
    pieces over land carry no data and no risk.  Raises when the route runs
    past day 365.
    """
    config = config or SimConfig()
    pieces = split_legs_by_day(route, config.start_hour)
    records = []
    for piece in pieces:
        day = config.start_day + piece.sim_day - 1
        if day > DAYS_PER_YEAR:
            raise SimulationError(
                f"route {route_id(route)} runs past the dataset's last day (day {day})"
            )
        mean, _ = leg_ice(dataset, piece.from_point, piece.to_point, day, config.rectangle_pad)
        at_risk = mean is not None and mean > config.psi
        records.append(LegRisk(piece.sim_day, day, piece.duration, mean, at_risk))
    total = math.fsum(r.hours for r in records)
    risk = math.fsum(r.hours for r in records if r.at_risk)
    early = math.fsum(r.hours for r in records if r.at_risk and r.sim_day <= EARLY_WINDOW_DAYS)
    return RiskReport(
        route_id=route_id(route),
        planning_month=route.planning_month,
        planning_year=dataset.year_label if planning_year is None else planning_year,
        simulation_year=dataset.year_label,
        total_travel_hours=total,
        risk_hours=risk,
        early_risk_hours=early,
        legs=tuple(records),
    )


def simulate_pathbook(book: PathBook, dataset: EnvDataset, psi: float = 0.12, pad: int = 1,
                      planning_year: str | None = None,
                      max_route_days: float | None = None) -> list[RiskReport]:
    """Simulate every path-book route from the first day of its planning month.

    Routes that would run past the end of the dataset's year are skipped.
    """
    reports = []
    for _, route in book:
        if not route.legs:
            continue
        if max_route_days is not None and route.total_hours / HOURS_PER_DAY > max_route_days:
            continue
        cfg = SimConfig(psi=psi, rectangle_pad=pad, start_day=MONTH_START_DAY[route.planning_month - 1])
        try:
            reports.append(simulate(route, dataset, cfg, planning_year))
        except SimulationError:
            continue
    return reports


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsRow:
    configuration: str
    phi: float
    speed_kmh: float
    route_count: int
    mean_travel_days: float
    intra_risk_days: float
    risk_per_day: float

    @property
    def empty(self) -> bool:
        return self.route_count == 0


METRICS_HEADER = "configuration,phi,speed_kmh,route_count,mean_travel_days,intra_risk_days,risk_per_day,empty"


def metrics(pathbook: PathBook, reports: Iterable[RiskReport], configuration: str = "", phi: float = math.nan,
            speed_kmh: float = math.nan, max_route_days: float = 30.0) -> MetricsRow:
    """Accessibility, efficiency and risk summary for one path-book.

    Routes longer than ``max_route_days`` are not counted.  Intra-year risk is
    the risk accrued within the first 30 simulated days.
    """
    routes = [r for _, r in pathbook if r.total_hours / HOURS_PER_DAY <= max_route_days]
    count = len(routes)
    if count == 0:
        return MetricsRow(configuration, phi, speed_kmh, 0, 0.0, 0.0, 0.0)
    travel = math.fsum(r.total_hours for r in routes) / HOURS_PER_DAY
    wanted = {route_id(r) for r in routes}
    intra = [rep for rep in reports if rep.intra_year and rep.route_id in wanted]
    risk = math.fsum(rep.early_risk_hours for rep in intra) / HOURS_PER_DAY
    sim_travel = math.fsum(rep.total_travel_hours for rep in intra) / HOURS_PER_DAY
    return MetricsRow(
        configuration, phi, speed_kmh, count, travel / count, risk,
        risk / sim_travel if sim_travel > 0 else 0.0,
    )


def _fmt(x: float, nd: int = 6) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return f"{x:.{nd}f}"


def metrics_csv(rows: Sequence[MetricsRow]) -> str:
    lines = [METRICS_HEADER]
    for r in rows:
        lines.append(
            f"{r.configuration},{_fmt(r.phi, 4)},{_fmt(r.speed_kmh, 3)},{r.route_count},"
            f"{_fmt(r.mean_travel_days)},{_fmt(r.intra_risk_days)},{_fmt(r.risk_per_day)},"
            f"{'yes' if r.empty else 'no'}"
        )
    return "\n".join(lines) + "\n"


REPORT_HEADER = ("route_id,planning_month,planning_year,simulation_year,travel_hours,risk_hours,"
                 "risk_days,early_risk_days,no_data_legs")


def reports_csv(reports: Sequence[RiskReport]) -> str:
    lines = [REPORT_HEADER]
    for r in reports:
        lines.append(
            f"{r.route_id},{r.planning_month},{r.planning_year},{r.simulation_year},"
            f"{r.total_travel_hours:.6f},{r.risk_hours:.6f},{r.risk_days:.6f},{r.early_risk_days:.6f},"
            f"{r.no_data_legs}"
        )
    return "\n".join(lines) + "\n"


MONTHLY_HEADER = "month,planned_travel_days,intra_risk_pct,inter_mean_pct,inter_min_pct,inter_max_pct"


def monthly_csv(reports: Sequence[RiskReport]) -> str:
    """Per planning month: travel days and the share of them that were risk days."""
    lines = [MONTHLY_HEADER]
    for month in range(1, 13):
        mine = [r for r in reports if r.planning_month == month]
        intra = [r for r in mine if r.intra_year]
        travel = math.fsum(r.total_travel_hours for r in intra) / HOURS_PER_DAY
        intra_pct = (100.0 * math.fsum(r.early_risk_hours for r in intra) / HOURS_PER_DAY / travel
                     if travel > 0 else math.nan)
        by_year: dict[str, list[RiskReport]] = {}
        for r in mine:
            if not r.intra_year:
                by_year.setdefault(r.simulation_year, []).append(r)
        pcts = []
        for year in sorted(by_year):
            rs = by_year[year]
            td = math.fsum(r.total_travel_hours for r in rs)
            if td > 0:
                pcts.append(100.0 * math.fsum(r.early_risk_hours for r in rs) / td)
        if pcts:
            inter = (_fmt(math.fsum(pcts) / len(pcts), 4), _fmt(min(pcts), 4), _fmt(max(pcts), 4))
        else:
            inter = ("", "", "")
        lines.append(f"{month},{_fmt(travel, 4)},{_fmt(intra_pct, 4)},{inter[0]},{inter[1]},{inter[2]}")
    return "\n".join(lines) + "\n"
