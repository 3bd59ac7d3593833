"""Coarse grid, ice-driven quadtree refinement and per-month leaf layers."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .env_data import (
    Bounds,
    EnvDataset,
    IceStats,
    NoDataError,
    RegionSpec,
    ice_stats_from_values,
)

# grid spacing at which the reference sample limit applies
REFERENCE_STEP = 1.0 / 6.0
LAND_FRACTION = 0.25


class MeshError(ValueError):
    pass


class CellClass(str, Enum):
    OPEN_WATER = "open_water"
    ICE_LOCKED = "ice_locked"
    LAND = "land"


@dataclass(frozen=True)
class HomogeneityConfig:
    lb: float
    ub: float
    t: float = 0.04
    max_depth: int = 3
    min_samples_per_month: float = 210

    def __post_init__(self) -> None:
        if not 0.0 <= self.lb <= self.ub <= 1.0:
            raise MeshError(f"need 0 <= lb <= ub <= 1, got lb={self.lb}, ub={self.ub}")
        if not 0.0 < self.t < 1.0:
            raise MeshError(f"threshold t must be in (0, 1), got {self.t}")
        if self.max_depth < 0:
            raise MeshError("max_depth must be >= 0")

    def sample_limit(self, grid_step: float) -> float:
        """Per-child monthly sample floor, scaled from the 1/6 degree reference."""
        return self.min_samples_per_month * (REFERENCE_STEP / grid_step) ** 2

    @classmethod
    def preset(cls, name: str) -> HomogeneityConfig:
        try:
            return PRESETS[name]
        except KeyError:
            raise MeshError(f"unknown homogeneity preset {name!r}; choose from {sorted(PRESETS)}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


WEAK = HomogeneityConfig(lb=0.15, ub=0.70)
STRONG = HomogeneityConfig(lb=0.05, ub=0.90)
UNREFINED = HomogeneityConfig(lb=0.0, ub=0.0)
PRESETS = {"weak": WEAK, "strong": STRONG, "none": UNREFINED}


@dataclass(eq=False)
class CellNode:
    bounds: Bounds
    depth: int
    row: int
    col: int
    path: tuple[int, ...]
    avg_current: tuple[float, float]
    sample_count: int
    is_land: bool
    month_stats: tuple[IceStats | None, ...]
    children: tuple[CellNode, ...] = ()

    @property
    def center(self) -> tuple[float, float]:
        return self.bounds.center

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def key(self) -> str:
        return f"{self.row}.{self.col}" + "".join(f".{q}" for q in self.path)

    def leaves(self) -> Iterator[CellNode]:
        if not self.children:
            yield self
            return
        for child in self.children:
            yield from child.leaves()


@dataclass(eq=False)
class CoarseGrid:
    region: RegionSpec
    cell_w: float
    cell_h: float
    rows: int
    cols: int
    cells: list[CellNode]
    t: float = 0.04

    def cell(self, row: int, col: int) -> CellNode:
        return self.cells[row * self.cols + col]


def g_measure(above_t_fraction: float, config: HomogeneityConfig) -> float:
    """Inhomogeneity score ``(lb - x)(x - ub)``; positive means split."""
    x = above_t_fraction
    return (config.lb - x) * (x - config.ub)


def _month_stats(dataset: EnvDataset, bounds: Bounds, t: float) -> tuple[IceStats | None, ...]:
    out = []
    for month in range(1, 13):
        values = dataset.ice_block(bounds, month)
        out.append(ice_stats_from_values(values, t) if values.size else None)
    return tuple(out)


def _make_cell(dataset: EnvDataset, bounds: Bounds, depth: int, row: int, col: int,
               path: tuple[int, ...], t: float) -> CellNode:
    u, v, n_points = dataset.current_mean(bounds)
    return CellNode(
        bounds=bounds,
        depth=depth,
        row=row,
        col=col,
        path=path,
        avg_current=(u, v),
        sample_count=n_points,
        is_land=False,
        month_stats=_month_stats(dataset, bounds, t),
    )


def build_coarse_grid(dataset: EnvDataset, cell_w: float = 5.0, cell_h: float = 2.5,
                      t: float = 0.04) -> CoarseGrid:
    """Tile the region into ``cell_w x cell_h`` cells and flag land.

    A cell is land when it holds fewer than 25% of the lattice points its area
    could contain.
    """
    region = dataset.region
    cols_f = (region.lon_max - region.lon_min) / cell_w
    rows_f = (region.lat_max - region.lat_min) / cell_h
    if abs(cols_f - round(cols_f)) > 1e-9 or abs(rows_f - round(rows_f)) > 1e-9:
        raise MeshError(
            f"region {region.lon_max - region.lon_min} x {region.lat_max - region.lat_min} degrees "
            f"is not divisible into {cell_w} x {cell_h} cells"
        )
    if not dataset.present.any():
        raise MeshError("dataset is empty")
    rows, cols = int(round(rows_f)), int(round(cols_f))
    max_points = region.max_points(cell_w, cell_h)
    cells = []
    for r in range(rows):
        for c in range(cols):
            b = Bounds(
                region.lat_min + r * cell_h,
                region.lat_min + (r + 1) * cell_h,
                region.lon_min + c * cell_w,
                region.lon_min + (c + 1) * cell_w,
            )
            cell = _make_cell(dataset, b, 0, r, c, (), t)
            cell.is_land = cell.sample_count < LAND_FRACTION * max_points
            cells.append(cell)
    return CoarseGrid(region, cell_w, cell_h, rows, cols, cells, t)


def split_cell(cell: CellNode, dataset: EnvDataset, month: int, config: HomogeneityConfig) -> CellNode:
    """Recursively quarter ``cell`` while the month's ice data is inhomogeneous.

    A cell splits iff ``g_measure > 0``, it is shallower than ``max_depth`` and
    every quarter keeps at least the scaled monthly sample floor.  Returns a
    new node; the input is not modified.
    """
    if cell.is_land:
        raise MeshError(f"cannot split land cell {cell.key}")
    limit = config.sample_limit(dataset.region.grid_step)
    return _split(cell, dataset, month, config, limit)


def _split(cell: CellNode, dataset: EnvDataset, month: int, config: HomogeneityConfig,
           limit: float) -> CellNode:
    leaf = dataclasses.replace(cell, children=())
    if cell.depth >= config.max_depth:
        return leaf
    values = dataset.ice_block(cell.bounds, month)
    if values.size == 0:
        return leaf
    x = float(np.count_nonzero(values > config.t)) / values.size
    if g_measure(x, config) <= 0:
        return leaf
    quarters = cell.bounds.quarters()
    if any(dataset.ice_block(q, month).size < limit for q in quarters):
        return leaf
    children = tuple(
        _split(
            _make_cell(dataset, q, cell.depth + 1, cell.row, cell.col, cell.path + (k,), config.t),
            dataset, month, config, limit,
        )
        for k, q in enumerate(quarters)
    )
    return dataclasses.replace(cell, children=children)


def classify_cell_month(cell: CellNode, month: int, ice_lock_threshold: float) -> CellClass:
    if cell.is_land:
        return CellClass.LAND
    stats = cell.month_stats[month - 1]
    if stats is None:
        raise NoDataError(f"cell {cell.key} has no ice data for month {month}")
    if stats.mean > ice_lock_threshold:
        return CellClass.ICE_LOCKED
    return CellClass.OPEN_WATER


# ---------------------------------------------------------------------------
# layers and adjacency

SIDE = "side"
CORNER = "corner"


@dataclass(eq=False)
class MonthLayer:
    month: int
    leaves: list[CellNode]
    classes: list[CellClass]
    boxes: list[tuple[int, int, int, int]]
    adjacency: list[tuple[int, int, str]]
    neighbors: list[list[tuple[int, str]]]
    phi: float

    def leaf_index(self, key: str) -> int:
        for k, leaf in enumerate(self.leaves):
            if leaf.key == key:
                return k
        raise KeyError(key)

    def open_mask(self, phi: float | None = None) -> list[bool]:
        """Which leaves may be entered under risk-avoidance threshold ``phi``."""
        if phi is None or phi == self.phi:
            return [c is CellClass.OPEN_WATER for c in self.classes]
        return [classify_cell_month(leaf, self.month, phi) is CellClass.OPEN_WATER for leaf in self.leaves]


def integer_boxes(leaves: Sequence[CellNode], origin_lat: float, origin_lon: float,
                  cell_w: float, cell_h: float) -> list[tuple[int, int, int, int]]:
    """Leaf rectangles as ``(x0, x1, y0, y1)`` in units of the finest leaf size."""
    depth = max((leaf.depth for leaf in leaves), default=0)
    ux = cell_w / 2 ** depth
    uy = cell_h / 2 ** depth
    boxes = []
    for leaf in leaves:
        b = leaf.bounds
        boxes.append((
            int(round((b.lon_lo - origin_lon) / ux)),
            int(round((b.lon_hi - origin_lon) / ux)),
            int(round((b.lat_lo - origin_lat) / uy)),
            int(round((b.lat_hi - origin_lat) / uy)),
        ))
    return boxes


def compute_adjacency(boxes: Sequence[tuple[int, int, int, int]]) -> list[tuple[int, int, str]]:
    """Side and corner adjacency for a tiling given as integer boxes.

    Boxes that share a boundary segment of positive length are side-adjacent.
    Boxes touching at a single point are corner-adjacent; leaves are all scaled
    copies of one rectangle, so the centre-to-centre segment of such a pair
    always runs through the shared corner.
    """
    if not boxes:
        return []
    width = max(b[1] for b in boxes)
    height = max(b[3] for b in boxes)
    occ = np.full((height, width), -1, dtype=np.int64)
    for k, (x0, x1, y0, y1) in enumerate(boxes):
        if x0 >= x1 or y0 >= y1:
            raise MeshError(f"empty leaf box {k}")
        if (occ[y0:y1, x0:x1] != -1).any():
            raise MeshError(f"leaf {k} overlaps another leaf")
        occ[y0:y1, x0:x1] = k
    if (occ == -1).any():
        raise MeshError("leaves do not tile the region")

    pairs: set[tuple[int, int, str]] = set()
    for k, (x0, x1, y0, y1) in enumerate(boxes):
        if x1 < width:
            for m in np.unique(occ[y0:y1, x1]).tolist():
                pairs.add((min(k, m), max(k, m), SIDE))
        if y1 < height:
            for m in np.unique(occ[y1, x0:x1]).tolist():
                pairs.add((min(k, m), max(k, m), SIDE))
            if x1 < width:
                m = int(occ[y1, x1])
                if boxes[m][0] == x1 and boxes[m][2] == y1:
                    pairs.add((min(k, m), max(k, m), CORNER))
            if x0 > 0:
                m = int(occ[y1, x0 - 1])
                if boxes[m][1] == x0 and boxes[m][2] == y1:
                    pairs.add((min(k, m), max(k, m), CORNER))
    return sorted(pairs)


def assemble_layer(month: int, leaves: Sequence[CellNode], classes: Sequence[CellClass],
                   origin_lat: float, origin_lon: float, cell_w: float, cell_h: float,
                   phi: float) -> MonthLayer:
    boxes = integer_boxes(leaves, origin_lat, origin_lon, cell_w, cell_h)
    pairs = compute_adjacency(boxes)
    neighbors: list[list[tuple[int, str]]] = [[] for _ in leaves]
    for a, b, kind in pairs:
        neighbors[a].append((b, kind))
        neighbors[b].append((a, kind))
    for lst in neighbors:
        lst.sort()
    return MonthLayer(month, list(leaves), list(classes), boxes, pairs, neighbors, phi)


def adjacency(layer: MonthLayer) -> list[tuple[int, int, str]]:
    """Unordered adjacent leaf pairs ``(i, j, kind)`` with ``i < j``."""
    return layer.adjacency


def build_month_layer(grid: CoarseGrid, dataset: EnvDataset, month: int,
                      config: HomogeneityConfig, phi: float) -> MonthLayer:
    leaves: list[CellNode] = []
    for cell in grid.cells:
        if cell.is_land:
            leaves.append(cell)
        else:
            leaves.extend(split_cell(cell, dataset, month, config).leaves())
    classes = [classify_cell_month(leaf, month, phi) for leaf in leaves]
    return assemble_layer(month, leaves, classes, grid.region.lat_min, grid.region.lon_min,
                          grid.cell_w, grid.cell_h, phi)


def build_year_layers(dataset: EnvDataset, config: HomogeneityConfig, phi: float,
                      cell_w: float = 5.0, cell_h: float = 2.5) -> list[MonthLayer]:
    grid = build_coarse_grid(dataset, cell_w, cell_h, t=config.t)
    return [build_month_layer(grid, dataset, m, config, phi) for m in range(1, 13)]


# ---------------------------------------------------------------------------
# export


def _r(x: float, nd: int = 6) -> float:
    return round(float(x), nd)


def mesh_records(layers: Sequence[MonthLayer]) -> list[str]:
    lines = ["month,key,lat_lo,lat_hi,lon_lo,lon_hi,depth,class,u,v,ice_mean,ice_var"]
    for layer in layers:
        for leaf, cls in zip(layer.leaves, layer.classes):
            b = leaf.bounds
            st = leaf.month_stats[layer.month - 1]
            mean = "" if st is None else f"{st.mean:.6f}"
            var = "" if st is None else f"{st.variance:.6f}"
            lines.append(
                f"{layer.month},{leaf.key},{b.lat_lo:.6f},{b.lat_hi:.6f},{b.lon_lo:.6f},{b.lon_hi:.6f},"
                f"{leaf.depth},{cls.value},{leaf.avg_current[0]:.6f},{leaf.avg_current[1]:.6f},{mean},{var}"
            )
    return lines


def mesh_geojson(layers: Sequence[MonthLayer], config: dict | None = None) -> dict:
    features = []
    for layer in layers:
        for leaf, cls in zip(layer.leaves, layer.classes):
            b = leaf.bounds
            st = leaf.month_stats[layer.month - 1]
            ring = [[_r(b.lon_lo), _r(b.lat_lo)], [_r(b.lon_hi), _r(b.lat_lo)], [_r(b.lon_hi), _r(b.lat_hi)],
                    [_r(b.lon_lo), _r(b.lat_hi)], [_r(b.lon_lo), _r(b.lat_lo)]]
            features.append({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "month": layer.month,
                    "key": leaf.key,
                    "depth": leaf.depth,
                    "class": cls.value,
                    "u": _r(leaf.avg_current[0]),
                    "v": _r(leaf.avg_current[1]),
                    "ice_mean": None if st is None else _r(st.mean),
                    "ice_var": None if st is None else _r(st.variance),
                },
            })
    out = {"type": "FeatureCollection", "features": features}
    if config is not None:
        out["config"] = config
    return out


def write_mesh(layers: Sequence[MonthLayer], out_dir: Path, config: dict) -> None:
    header = "# config " + json.dumps(config, sort_keys=True)
    (out_dir / "mesh.txt").write_text("\n".join([header, *mesh_records(layers)]) + "\n", encoding="utf-8")
    (out_dir / "mesh.geojson").write_text(json.dumps(mesh_geojson(layers, config), sort_keys=True) + "\n",
                                          encoding="utf-8")
