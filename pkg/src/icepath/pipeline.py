"""End-to-end wiring shared by the CLI and the scenario tests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .composer import build_year_graph, compose, journey_record, journeys_table, render_calendar
from .env_data import EnvDataset, RegionSpec, Scenario, generate_synthetic
from .mesh import PRESETS, HomogeneityConfig, MonthLayer, build_year_layers
from .planner import PathBook, Waypoint, build_pathbook, load_waypoints, pathbook_lines
from .simulator import metrics, metrics_csv, monthly_csv, simulate_pathbook

KMH = 1.0 / 3.6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings; thresholds are fractions, speed in km/h."""

    homogeneity: str = "strong"
    lb: float = 0.05
    ub: float = 0.90
    t: float = 0.04
    phi: float = 0.08
    psi: float = 0.12
    speed_kmh: float = 3.0
    rectangle_pad: int = 1
    max_depth: int = 3
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.speed_kmh > 0:
            raise ConfigError("speed must be positive")
        if not 0.0 <= self.phi <= 1.0:
            raise ConfigError("phi must be within 0..100 percent")
        if not 0.0 < self.psi < 1.0:
            raise ConfigError("psi must be strictly between 0 and 100 percent")
        self.homogeneity_config()

    @classmethod
    def from_preset(cls, name: str, **kw) -> RunConfig:
        if name not in PRESETS:
            raise ConfigError(f"unknown homogeneity preset {name!r}")
        p = PRESETS[name]
        return cls(homogeneity=name, lb=p.lb, ub=p.ub, t=p.t, **kw)

    def homogeneity_config(self) -> HomogeneityConfig:
        try:
            return HomogeneityConfig(self.lb, self.ub, self.t, self.max_depth)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def speed_ms(self) -> float:
        return self.speed_kmh * KMH

    def to_dict(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return d


def golden_region() -> RegionSpec:
    return RegionSpec(-80.0, -40.0, -130.0, 30.0, 0.5)


GOLDEN_SEED = 2024
GOLDEN_PAIRS = (
    ("Amundsen Sea", "Brunt"),
    ("Argentine Basin", "Marguerite Bay"),
    ("Falklands", "Maud Rise"),
    ("Palmer", "South Georgia"),
    ("Bellingshausen Sea", "Northern Weddell Sea"),
)


GOLDEN_SCENARIO = Scenario(ice_edge_lat=-68.0, ice_amplitude=8.0, ice_lon_amplitude=2.0, ice_jitter=0.5)


def golden_dataset() -> EnvDataset:
    return generate_synthetic(golden_region(), GOLDEN_SCENARIO, seed=GOLDEN_SEED, year_label="synthetic-2024")


def dataset_digest(dataset: EnvDataset) -> str:
    h = hashlib.sha256()
    for arr in (dataset.u, dataset.v, dataset.ice):
        h.update(arr.tobytes())
    return h.hexdigest()


@dataclass(eq=False)
class ScenarioRun:
    config: RunConfig
    layers: list[MonthLayer]
    pathbook: PathBook
    artifacts: dict[str, str]


def run_scenario(dataset: EnvDataset, config: RunConfig, waypoints: Sequence[Waypoint] | None = None,
                 pairs: Sequence[tuple[str, str]] = (), layers: list[MonthLayer] | None = None) -> ScenarioRun:
    """Mesh, path-book, journeys, simulation and metrics for one configuration."""
    waypoints = list(load_waypoints() if waypoints is None else waypoints)
    if layers is None:
        layers = build_year_layers(dataset, config.homogeneity_config(), config.phi)
    echo = config.to_dict()
    echo["year"] = dataset.year_label
    book = build_pathbook(layers, waypoints, config.speed_ms, config.phi, echo)
    graph = build_year_graph(book)
    rows = []
    calendars = []
    for init, goal in pairs:
        j = compose(init, goal, graph)
        rows.append((init, goal, j))
        if j is not None:
            calendars.append(render_calendar(j))
    reports = simulate_pathbook(book, dataset, config.psi, config.rectangle_pad, max_route_days=30.0)
    row = metrics(book, reports, config.homogeneity, config.phi, config.speed_kmh)
    header = "# config " + json.dumps(echo, sort_keys=True)
    journeys = {
        "config": echo,
        "journeys": [
            {"init": a, "goal": b, "journey": None if j is None else journey_record(j, dataset.year_label)}
            for a, b, j in rows
        ],
    }
    artifacts = {
        "pathbook.jsonl": "".join(line + "\n" for line in pathbook_lines(book)),
        "journeys.json": json.dumps(journeys, sort_keys=True, indent=1) + "\n",
        "journeys.csv": "\n".join([header, *journeys_table(rows, dataset.year_label)]) + "\n",
        "calendars.txt": "\n".join(calendars),
        "metrics.csv": header + "\n" + metrics_csv([row]),
        "monthly.csv": header + "\n" + monthly_csv(reports),
    }
    return ScenarioRun(config, layers, book, artifacts)
