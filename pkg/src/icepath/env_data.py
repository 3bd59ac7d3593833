"""Environmental dataset: currents and daily sea-ice concentration on a lat/lon grid.

Samples sit on a cell-centred lattice: ``lat_i = lat_min + (i + 0.5) * step`` and
likewise for longitude, so a region of ``n_lat x n_lon`` lattice points has no
sample lying on its outer boundary.  A 5 x 2.5 degree block at 1/6 degree
therefore holds exactly 30 x 15 = 450 points.

Missing data (land) is represented by NaN in all three value arrays; the
on-disk format simply omits those rows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365
MONTH_LENGTHS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
MONTH_NAMES = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)
# first day-of-year of each month, 1-based
MONTH_START_DAY = tuple(1 + sum(MONTH_LENGTHS[:m]) for m in range(12))

GRID_TOL = 1e-9
HEADER = "lat,lon,day,u,v,ice"


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


class NoDataError(LookupError):
    """A statistic was requested over an empty sample set."""


def month_day_range(month: int) -> range:
    """Days-of-year (1-based, inclusive range) belonging to calendar ``month``."""
    if not 1 <= month <= 12:
        raise ValueError(f"month must be in 1..12, got {month}")
    start = MONTH_START_DAY[month - 1]
    return range(start, start + MONTH_LENGTHS[month - 1])


def month_of_day(day: int) -> int:
    if not 1 <= day <= DAYS_PER_YEAR:
        raise ValueError(f"day must be in 1..365, got {day}")
    for m in range(11, -1, -1):
        if day >= MONTH_START_DAY[m]:
            return m + 1
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned lat/lon rectangle, half-open ``[lo, hi)`` on both axes."""

    lat_lo: float
    lat_hi: float
    lon_lo: float
    lon_hi: float

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.lat_lo + self.lat_hi), 0.5 * (self.lon_lo + self.lon_hi))

    @property
    def height(self) -> float:
        return self.lat_hi - self.lat_lo

    @property
    def width(self) -> float:
        return self.lon_hi - self.lon_lo

    @property
    def area(self) -> float:
        return self.height * self.width

    def quarters(self) -> tuple[Bounds, Bounds, Bounds, Bounds]:
        # order: (south, west), (south, east), (north, west), (north, east)
        mlat = 0.5 * (self.lat_lo + self.lat_hi)
        mlon = 0.5 * (self.lon_lo + self.lon_hi)
        return (
            Bounds(self.lat_lo, mlat, self.lon_lo, mlon),
            Bounds(self.lat_lo, mlat, mlon, self.lon_hi),
            Bounds(mlat, self.lat_hi, self.lon_lo, mlon),
            Bounds(mlat, self.lat_hi, mlon, self.lon_hi),
        )


@dataclass(frozen=True)
class RegionSpec:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    grid_step: float = 1.0 / 6.0

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat_min < self.lat_max <= 90.0):
            raise DatasetError(f"bad latitude range {self.lat_min}..{self.lat_max}")
        if not (-180.0 <= self.lon_min < self.lon_max <= 180.0):
            raise DatasetError(f"bad longitude range {self.lon_min}..{self.lon_max}")
        if not self.grid_step > 0:
            raise DatasetError("grid_step must be positive")
        for span in (self.lat_max - self.lat_min, self.lon_max - self.lon_min):
            n = span / self.grid_step
            if abs(n - round(n)) > 1e-6:
                raise DatasetError(f"region span {span} is not a multiple of grid_step {self.grid_step}")

    @property
    def n_lat(self) -> int:
        return int(round((self.lat_max - self.lat_min) / self.grid_step))

    @property
    def n_lon(self) -> int:
        return int(round((self.lon_max - self.lon_min) / self.grid_step))

    @property
    def bounds(self) -> Bounds:
        return Bounds(self.lat_min, self.lat_max, self.lon_min, self.lon_max)

    def lat_at(self, i: int) -> float:
        return self.lat_min + (i + 0.5) * self.grid_step

    def lon_at(self, j: int) -> float:
        return self.lon_min + (j + 0.5) * self.grid_step

    @cached_property
    def lats(self) -> np.ndarray:
        return self.lat_min + (np.arange(self.n_lat) + 0.5) * self.grid_step

    @cached_property
    def lons(self) -> np.ndarray:
        return self.lon_min + (np.arange(self.n_lon) + 0.5) * self.grid_step

    def _snap(self, value: float, origin: float, n: int, what: str) -> int:
        pos = (value - origin) / self.grid_step - 0.5
        idx = int(round(pos))
        if abs(origin + (idx + 0.5) * self.grid_step - value) > GRID_TOL:
            raise DatasetError(f"{what} {value!r} is not on the {self.grid_step:g} degree grid")
        if not 0 <= idx < n:
            raise DatasetError(f"{what} {value!r} lies outside the region")
        return idx

    def lat_index(self, lat: float) -> int:
        return self._snap(lat, self.lat_min, self.n_lat, "latitude")

    def lon_index(self, lon: float) -> int:
        return self._snap(lon, self.lon_min, self.n_lon, "longitude")

    def _first_at_or_above(self, value: float, origin: float, n: int) -> int:
        k = math.ceil((value - origin) / self.grid_step - 0.5 - GRID_TOL)
        return min(max(k, 0), n)

    def index_box(self, b: Bounds) -> tuple[int, int, int, int]:
        """Lattice index ranges ``(i0, i1, j0, j1)`` of points inside half-open ``b``.

        Both ends go through the same rounding, so sibling rectangles sharing an
        edge never both claim a point lying on it.
        """
        return (
            self._first_at_or_above(b.lat_lo, self.lat_min, self.n_lat),
            self._first_at_or_above(b.lat_hi, self.lat_min, self.n_lat),
            self._first_at_or_above(b.lon_lo, self.lon_min, self.n_lon),
            self._first_at_or_above(b.lon_hi, self.lon_min, self.n_lon),
        )

    def closed_index_box(self, lat_lo: float, lat_hi: float, lon_lo: float, lon_hi: float):
        """Index ranges of points inside the closed rectangle (tolerant at the edges)."""
        def first(v, origin, n):
            return min(max(math.ceil((v - origin) / self.grid_step - 0.5 - GRID_TOL), 0), n)

        def past(v, origin, n):
            return min(max(math.floor((v - origin) / self.grid_step - 0.5 + GRID_TOL) + 1, 0), n)

        return (
            first(lat_lo, self.lat_min, self.n_lat),
            past(lat_hi, self.lat_min, self.n_lat),
            first(lon_lo, self.lon_min, self.n_lon),
            past(lon_hi, self.lon_min, self.n_lon),
        )

    def max_points(self, width: float, height: float) -> int:
        """Lattice points a ``width x height`` degree block can hold."""
        return int(round(width / self.grid_step)) * int(round(height / self.grid_step))


@dataclass(eq=False)
class EnvDataset:
    """One year of currents and daily ice on the region lattice.

    ``u``, ``v`` and ``ice`` have shape ``(365, n_lat, n_lon)``; index 0 is day 1.
    The arrays may be read-only broadcast views (steady currents) and must not
    be mutated after construction.
    """

    region: RegionSpec
    year_label: str
    u: np.ndarray
    v: np.ndarray
    ice: np.ndarray
    _month_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        shape = (DAYS_PER_YEAR, self.region.n_lat, self.region.n_lon)
        for name in ("u", "v", "ice"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DatasetError(f"{name} has shape {arr.shape}, expected {shape}")
        vals = self.ice[~np.isnan(self.ice)]
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise DatasetError("ice concentration out of range [0, 1]")

    @cached_property
    def present(self) -> np.ndarray:
        """Boolean (day, i, j) mask of stored samples."""
        return ~np.isnan(self.ice)

    @cached_property
    def present_points(self) -> np.ndarray:
        """Lattice points holding data on at least one day."""
        return self.present.any(axis=0)

    @property
    def n_samples(self) -> int:
        return int(self.present.sum())

    def samples(self) -> Iterator[tuple[int, int, int, float, float, float]]:
        """Yield ``(i, j, day, u, v, ice)`` for every stored sample."""
        d_idx, i_idx, j_idx = np.nonzero(self.present)
        for d, i, j in zip(d_idx.tolist(), i_idx.tolist(), j_idx.tolist()):
            yield i, j, d + 1, float(self.u[d, i, j]), float(self.v[d, i, j]), float(self.ice[d, i, j])

    def ice_block(self, bounds: Bounds, month: int) -> np.ndarray:
        """Flat array of the ice samples inside ``bounds`` during ``month``."""
        i0, i1, j0, j1 = self.region.index_box(bounds)
        days = month_day_range(month)
        block = self.ice[days.start - 1: days.stop - 1, i0:i1, j0:j1]
        return block[~np.isnan(block)]

    def current_mean(self, bounds: Bounds) -> tuple[float, float, int]:
        """Mean current over every present (point, day) in ``bounds`` and the point count."""
        i0, i1, j0, j1 = self.region.index_box(bounds)
        n_points = int(self.present_points[i0:i1, j0:j1].sum())
        if n_points == 0:
            return 0.0, 0.0, 0
        mask = self.present[:, i0:i1, j0:j1]
        u = self.u[:, i0:i1, j0:j1][mask]
        v = self.v[:, i0:i1, j0:j1][mask]
        return float(u.mean()), float(v.mean()), n_points


@dataclass(frozen=True)
class IceStats:
    mean: float
    variance: float
    count: int
    above_t_fraction: float


def ice_stats_from_values(values: np.ndarray, t: float) -> IceStats:
    if values.size == 0:
        raise NoDataError("no ice samples in the requested cell-month")
    mean = float(values.mean())
    return IceStats(
        mean=mean,
        variance=float(np.mean((values - mean) ** 2)),
        count=int(values.size),
        above_t_fraction=float(np.count_nonzero(values > t)) / values.size,
    )


def monthly_ice_stats(dataset: EnvDataset, bounds: Bounds, month: int, t: float = 0.04) -> IceStats:
    """Mean, population variance, count and fraction above ``t`` of a cell-month.

    Raises :class:`NoDataError` when no sample falls inside ``bounds`` that month.
    """
    return ice_stats_from_values(dataset.ice_block(bounds, month), t)


# ---------------------------------------------------------------------------
# file format


def _format_float(x: float) -> str:
    return repr(float(x))


def write_dataset(dataset: EnvDataset, path: str | Path) -> None:
    r = dataset.region
    lats = [_format_float(x) for x in r.lats]
    lons = [_format_float(x) for x in r.lons]
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(
            f"# region {_format_float(r.lat_min)} {_format_float(r.lat_max)} "
            f"{_format_float(r.lon_min)} {_format_float(r.lon_max)} "
            f"{_format_float(r.grid_step)} {dataset.year_label}\n"
        )
        fh.write(HEADER + "\n")
        d_idx, i_idx, j_idx = np.nonzero(dataset.present)
        u = dataset.u[d_idx, i_idx, j_idx].tolist()
        v = dataset.v[d_idx, i_idx, j_idx].tolist()
        ice = dataset.ice[d_idx, i_idx, j_idx].tolist()
        lines = [
            f"{lats[i]},{lons[j]},{d + 1},{uu!r},{vv!r},{cc!r}\n"
            for d, i, j, uu, vv, cc in zip(d_idx.tolist(), i_idx.tolist(), j_idx.tolist(), u, v, ice)
        ]
        fh.writelines(lines)


def read_metadata(path: str | Path) -> tuple[RegionSpec, str] | None:
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# region"):
                parts = line.split()
                if len(parts) != 8:
                    raise DatasetError(f"malformed region metadata line: {line.strip()!r}")
                lat_min, lat_max, lon_min, lon_max, step = (float(p) for p in parts[2:7])
                return RegionSpec(lat_min, lat_max, lon_min, lon_max, step), parts[7]
            if not line.startswith("#"):
                return None
    return None


def load_dataset(path: str | Path, region: RegionSpec | None = None) -> EnvDataset:
    """Read the columnar text format.

    ``region`` overrides the metadata line; one of the two must be present.
    Every bad row raises :class:`DatasetError` naming its line number.
    """
    path = Path(path)
    meta = read_metadata(path)
    year = "unknown"
    if meta is not None:
        meta_region, year = meta
        region = region or meta_region
    if region is None:
        raise DatasetError(f"{path}: no region given and no '# region' metadata line")

    shape = (DAYS_PER_YEAR, region.n_lat, region.n_lon)
    u = np.full(shape, np.nan)
    v = np.full(shape, np.nan)
    ice = np.full(shape, np.nan)
    seen_header = False
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not seen_header:
                if line.replace(" ", "") != HEADER:
                    raise DatasetError(f"{path}:{lineno}: expected header {HEADER!r}, got {line!r}")
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise DatasetError(f"{path}:{lineno}: malformed row (expected 6 fields, got {len(parts)})")
            try:
                lat, lon = float(parts[0]), float(parts[1])
                day = int(parts[2])
                uu, vv, cc = float(parts[3]), float(parts[4]), float(parts[5])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: malformed row (non-numeric field): {line!r}") from None
            if not all(math.isfinite(x) for x in (lat, lon, uu, vv, cc)):
                raise DatasetError(f"{path}:{lineno}: malformed row (non-finite value)")
            if not 0.0 <= cc <= 1.0:
                raise DatasetError(f"{path}:{lineno}: ice concentration out of range: {cc!r}")
            if not 1 <= day <= DAYS_PER_YEAR:
                raise DatasetError(f"{path}:{lineno}: day {day} outside 1..365")
            try:
                i = region.lat_index(lat)
                j = region.lon_index(lon)
            except DatasetError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if not np.isnan(ice[day - 1, i, j]):
                raise DatasetError(f"{path}:{lineno}: duplicate sample at ({lat}, {lon}, day {day})")
            u[day - 1, i, j] = uu
            v[day - 1, i, j] = vv
            ice[day - 1, i, j] = cc
    if not seen_header:
        raise DatasetError(f"{path}: missing header line")
    return EnvDataset(region, year, u, v, ice)


# ---------------------------------------------------------------------------
# synthetic generation

# (lon, lat) vertices of a peninsula-shaped land mass
DEFAULT_LAND = (
    (-76.0, -80.0), (-58.0, -80.0), (-57.0, -72.0), (-56.0, -64.0),
    (-59.0, -62.5), (-64.0, -64.0), (-69.0, -68.0), (-76.0, -73.0),
)


@dataclass(frozen=True)
class Scenario:
    """Closed-form synthetic environment.

    Currents: an eastward circumpolar jet plus one clockwise gyre, rescaled so
    the fastest vector equals ``max_current``, then perturbed by seeded noise
    (still capped at ``max_current``).

    Ice: a smoothstep across a latitudinal edge.  The edge sits at
    ``ice_edge_lat + ice_amplitude * cos(2 pi (day - ice_peak_day) / 365)``
    (positive amplitude pushes it north at the ice maximum), plus an optional
    longitudinal wave and seeded day-to-day jitter.  Ice equals ``ice_high``
    more than ``ice_edge_width`` degrees south of the edge and ``ice_low`` more
    than that north of it.
    """

    land: tuple[tuple[tuple[float, float], ...], ...] = (DEFAULT_LAND,)
    max_current: float = 0.6
    jet_lat: float = -55.0
    jet_width: float = 5.0
    gyre_center: tuple[float, float] = (-30.0, -66.0)
    gyre_radius: float = 12.0
    gyre_strength: float = 0.6
    current_noise: float = 0.02
    ice_edge_lat: float = -64.0
    ice_amplitude: float = 5.0
    ice_peak_day: int = 258
    ice_edge_width: float = 1.5
    ice_low: float = 0.0
    ice_high: float = 0.95
    ice_lon_amplitude: float = 0.0
    ice_lon_wavelength: float = 120.0
    ice_jitter: float = 0.0

    @property
    def static_ice(self) -> bool:
        return self.ice_amplitude == 0.0 and self.ice_jitter == 0.0

    def ice_edge(self, day: np.ndarray | int, lon: np.ndarray | float, jitter: np.ndarray | float = 0.0):
        phase = 2.0 * np.pi * (np.asarray(day, dtype=float) - self.ice_peak_day) / DAYS_PER_YEAR
        edge = self.ice_edge_lat + self.ice_amplitude * np.cos(phase)
        if self.ice_lon_amplitude:
            edge = edge + self.ice_lon_amplitude * np.sin(2.0 * np.pi * np.asarray(lon) / self.ice_lon_wavelength)
        return edge + jitter

    def ice_at(self, lat, edge):
        """Closed-form concentration at ``lat`` given the edge latitude."""
        north = np.asarray(lat, dtype=float) - edge
        tt = np.clip((north + self.ice_edge_width) / (2.0 * self.ice_edge_width), 0.0, 1.0)
        step = tt * tt * (3.0 - 2.0 * tt)
        return self.ice_high + (self.ice_low - self.ice_high) * step


def _edge_jitter(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    raw = rng.normal(size=DAYS_PER_YEAR)
    if scenario.ice_jitter == 0.0:
        return np.zeros(DAYS_PER_YEAR)
    kernel = np.ones(7) / 7.0
    padded = np.concatenate([raw[-3:], raw, raw[:3]])
    smooth = np.convolve(padded, kernel, mode="valid")
    smooth = (smooth - smooth.mean()) / smooth.std()
    return scenario.ice_jitter * smooth


def _land_mask(region: RegionSpec, polygons: Sequence[Sequence[tuple[float, float]]]) -> np.ndarray:
    import shapely
    from shapely.geometry import Polygon

    mask = np.zeros((region.n_lat, region.n_lon), dtype=bool)
    if not polygons:
        return mask
    lon_g, lat_g = np.meshgrid(region.lons, region.lats)
    for poly in polygons:
        mask |= shapely.contains_xy(Polygon(poly), lon_g, lat_g)
    return mask


def generate_synthetic(region: RegionSpec, scenario: Scenario | None = None, seed: int = 0,
                       year_label: str = "synthetic") -> EnvDataset:
    """Deterministic dataset for ``(region, scenario, seed)``."""
    scenario = scenario or Scenario()
    if region.lat_max - region.lat_min <= 0 or region.lon_max - region.lon_min <= 0:
        raise DatasetError("degenerate region")
    rng = np.random.default_rng(seed)
    lat_g = region.lats[:, None]
    lon_g = region.lons[None, :]

    u = np.exp(-(((lat_g - scenario.jet_lat) / scenario.jet_width) ** 2)) * np.ones_like(lon_g)
    v = np.zeros_like(u)
    glon, glat = scenario.gyre_center
    dx = (lon_g - glon) * np.cos(np.radians(glat))
    dy = lat_g - glat
    envelope = np.exp(-(dx * dx + dy * dy) / scenario.gyre_radius ** 2)
    # clockwise rotation: velocity = strength * (dy, -dx) / radius
    u = u + scenario.gyre_strength * envelope * dy / scenario.gyre_radius
    v = v - scenario.gyre_strength * envelope * dx / scenario.gyre_radius
    speed = np.hypot(u, v)
    peak = speed.max()
    if peak > 0:
        u = u * (scenario.max_current / peak)
        v = v * (scenario.max_current / peak)
    if scenario.current_noise:
        u = u + rng.normal(0.0, scenario.current_noise, size=u.shape)
        v = v + rng.normal(0.0, scenario.current_noise, size=v.shape)
    else:
        rng.normal(size=u.shape)
        rng.normal(size=v.shape)
    speed = np.hypot(u, v)
    over = speed > scenario.max_current
    if over.any():
        factor = np.where(over, scenario.max_current / np.where(speed > 0, speed, 1.0), 1.0)
        u, v = u * factor, v * factor

    land = _land_mask(region, scenario.land)
    u[land] = np.nan
    v[land] = np.nan

    jitter = _edge_jitter(scenario, rng)
    days = np.arange(1, DAYS_PER_YEAR + 1)
    edge = scenario.ice_edge(days[:, None, None], region.lons[None, None, :], jitter[:, None, None])
    ice = scenario.ice_at(region.lats[None, :, None], edge)
    ice = np.clip(np.broadcast_to(ice, (DAYS_PER_YEAR, region.n_lat, region.n_lon)), 0.0, 1.0)
    ice[:, land] = np.nan

    shape = ice.shape
    return EnvDataset(
        region,
        year_label,
        np.broadcast_to(u, shape),
        np.broadcast_to(v, shape),
        ice,
    )
