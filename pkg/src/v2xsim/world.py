"""Two-level tessellation and the static world model.

The map is discretized twice: coarse policy areas (square or hexagonal)
that agents act on, and a fine uniform tile grid whose centers host every
link calculation. This module also derives the candidate base-station
sites: block-incenter rooftops for the macrocell plane and street
furniture for the femtocell plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon, box as shapely_box

from .errors import ConfigError, GeometryError, UnknownEntityError
from .geometry import (
    BuildingSolid,
    Point2D,
    Polygon,
    point_in_polygon,
    polygon_incenter,
    segment_intersections,
)
from .osm import SitePoint


class AreaShape(Enum):
    SQUARE = "square"
    HEXAGON = "hexagon"


@dataclass(frozen=True)
class BBox:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise GeometryError(f"degenerate bbox: {self}")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    def contains(self, p: Point2D) -> bool:
        return self.min_x <= p.x <= self.max_x and self.min_y <= p.y <= self.max_y

    def clamp(self, p: Point2D) -> Point2D:
        return Point2D(min(max(p.x, self.min_x), self.max_x),
                       min(max(p.y, self.min_y), self.max_y))


@dataclass
class AreaCell:
    area_id: int
    shape: AreaShape
    boundary: Polygon
    center: Point2D
    member_building_ids: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class Tile:
    tile_id: int
    incenter: Point2D
    size_m: float
    area_id: int


class SiteOrigin(Enum):
    ROOFTOP_INCENTER = "rooftop_incenter"
    LAMPPOST = "lamppost"
    TRAFFIC_SIGNAL = "traffic_signal"


@dataclass(frozen=True)
class CandidateSite:
    site_id: int
    plane: str  # "macrocell" | "femtocell"
    position: Point2D
    height_m: float
    origin: SiteOrigin


# --------------------------------------------------------------------------
# Tile grid
# --------------------------------------------------------------------------

class TileGrid:
    """Uniform square tile grid over the bbox; O(1) nearest-tile snapping.

    Tile ids are row-major from the bbox min corner. A point exactly on a
    tile boundary snaps to the lower tile id, matching an exhaustive
    nearest-center search with lower-id tie-breaking.
    """

    def __init__(self, bbox: BBox, tile_size_m: float):
        if tile_size_m <= 0:
            raise ConfigError(f"tile size must be > 0, got {tile_size_m}")
        self.bbox = bbox
        self.tile_size_m = float(tile_size_m)
        self.nx = max(1, math.ceil(bbox.width / tile_size_m))
        self.ny = max(1, math.ceil(bbox.height / tile_size_m))

    @property
    def n_tiles(self) -> int:
        return self.nx * self.ny

    def incenter(self, tile_id: int) -> Point2D:
        if not (0 <= tile_id < self.n_tiles):
            raise UnknownEntityError(f"tile id {tile_id} out of range")
        iy, ix = divmod(tile_id, self.nx)
        return Point2D(self.bbox.min_x + (ix + 0.5) * self.tile_size_m,
                       self.bbox.min_y + (iy + 0.5) * self.tile_size_m)

    def incenters(self) -> tuple[np.ndarray, np.ndarray]:
        ix = np.arange(self.nx, dtype=np.float64)
        iy = np.arange(self.ny, dtype=np.float64)
        xs = self.bbox.min_x + (ix + 0.5) * self.tile_size_m
        ys = self.bbox.min_y + (iy + 0.5) * self.tile_size_m
        gx, gy = np.meshgrid(xs, ys)
        return gx.ravel(), gy.ravel()

    def _axis_index(self, coord: float, lo: float, count: int) -> int:
        u = (coord - lo) / self.tile_size_m
        i = math.floor(u)
        if u == i and i > 0:
            i -= 1  # boundary point is equidistant; lower index wins
        return min(max(i, 0), count - 1)

    def nearest_tile(self, p: Point2D) -> int:
        q = self.bbox.clamp(p)
        ix = self._axis_index(q.x, self.bbox.min_x, self.nx)
        iy = self._axis_index(q.y, self.bbox.min_y, self.ny)
        return iy * self.nx + ix


# --------------------------------------------------------------------------
# Policy-area tessellation
# --------------------------------------------------------------------------

def tessellate(bbox: BBox, shape: AreaShape, size_m: float) -> list[AreaCell]:
    """Partition the bbox into equal-size policy areas.

    Square mode: axis-aligned size x size cells clipped to the bbox.
    Hexagon mode: flat-top hexagons with long diagonal ``size_m``, odd
    columns offset by half a row, clipped to the bbox.
    """
    if size_m <= 0:
        raise ConfigError(f"area size must be > 0, got {size_m}")
    if shape is AreaShape.SQUARE:
        return _tessellate_square(bbox, size_m)
    return _tessellate_hex(bbox, size_m)


def _tessellate_square(bbox: BBox, size_m: float) -> list[AreaCell]:
    nx = max(1, math.ceil(bbox.width / size_m))
    ny = max(1, math.ceil(bbox.height / size_m))
    cells = []
    for iy in range(ny):
        for ix in range(nx):
            x0 = bbox.min_x + ix * size_m
            y0 = bbox.min_y + iy * size_m
            x1 = min(x0 + size_m, bbox.max_x)
            y1 = min(y0 + size_m, bbox.max_y)
            boundary = Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
            cells.append(AreaCell(
                area_id=iy * nx + ix,
                shape=AreaShape.SQUARE,
                boundary=boundary,
                center=Point2D((x0 + x1) / 2.0, (y0 + y1) / 2.0),
            ))
    return cells


def _hex_centers(bbox: BBox, radius: float) -> list[tuple[int, Point2D]]:
    """Flat-top hex lattice centers covering the bbox, scan order (col, row)."""
    dx = 1.5 * radius
    dy = math.sqrt(3.0) * radius
    n_cols = int(math.ceil(bbox.width / dx)) + 2
    n_rows = int(math.ceil(bbox.height / dy)) + 2
    centers = []
    idx = 0
    for col in range(-1, n_cols):
        cx = bbox.min_x + col * dx
        offset = dy / 2.0 if col % 2 != 0 else 0.0
        for row in range(-1, n_rows):
            cy = bbox.min_y + row * dy + offset
            centers.append((idx, Point2D(cx, cy)))
            idx += 1
    return centers


def _hex_vertices(center: Point2D, radius: float) -> list[tuple[float, float]]:
    return [(center.x + radius * math.cos(math.radians(60 * k)),
             center.y + radius * math.sin(math.radians(60 * k))) for k in range(6)]


def _tessellate_hex(bbox: BBox, size_m: float) -> list[AreaCell]:
    radius = size_m / 2.0
    clip = shapely_box(bbox.min_x, bbox.min_y, bbox.max_x, bbox.max_y)
    cells = []
    area_id = 0
    for _, center in _hex_centers(bbox, radius):
        hexagon = ShapelyPolygon(_hex_vertices(center, radius))
        clipped = hexagon.intersection(clip)
        if clipped.is_empty or clipped.area <= 0.0:
            continue
        if clipped.geom_type != "Polygon":
            clipped = max(clipped.geoms, key=lambda g: g.area)
        boundary = Polygon(np.asarray(clipped.exterior.coords[:-1]))
        cells.append(AreaCell(area_id=area_id, shape=AreaShape.HEXAGON,
                              boundary=boundary, center=center))
        area_id += 1
    return cells


def point_in_hex(p: Point2D, center: Point2D, radius: float) -> bool:
    """Exact containment in a flat-top hexagon (boundary inclusive)."""
    dx = abs(p.x - center.x)
    dy = abs(p.y - center.y)
    sqrt3 = math.sqrt(3.0)
    return dy <= sqrt3 * radius / 2.0 + 1e-12 and sqrt3 * dx + dy <= sqrt3 * radius + 1e-12


class AreaMap:
    """Point -> area assignment, tie-broken toward the lower area id."""

    def __init__(self, bbox: BBox, shape: AreaShape, size_m: float):
        self.bbox = bbox
        self.shape = shape
        self.size_m = float(size_m)
        self.cells = tessellate(bbox, shape, size_m)
        if shape is AreaShape.SQUARE:
            self._nx = max(1, math.ceil(bbox.width / size_m))
            self._ny = max(1, math.ceil(bbox.height / size_m))

    @property
    def n_areas(self) -> int:
        return len(self.cells)

    def area_of_point(self, p: Point2D) -> int:
        q = self.bbox.clamp(p)
        if self.shape is AreaShape.SQUARE:
            u = (q.x - self.bbox.min_x) / self.size_m
            ix = math.floor(u)
            if u == ix and ix > 0:
                ix -= 1
            v = (q.y - self.bbox.min_y) / self.size_m
            iy = math.floor(v)
            if v == iy and iy > 0:
                iy -= 1
            ix = min(max(ix, 0), self._nx - 1)
            iy = min(max(iy, 0), self._ny - 1)
            return iy * self._nx + ix
        radius = self.size_m / 2.0
        for cell in self.cells:
            if point_in_hex(q, cell.center, radius):
                return cell.area_id
        # Numeric edge: fall back to the nearest center.
        best = min(self.cells,
                   key=lambda c: ((c.center.x - q.x) ** 2 + (c.center.y - q.y) ** 2, c.area_id))
        return best.area_id


def assign_buildings(areas: list[AreaCell], buildings: Sequence[BuildingSolid]) -> None:
    """Edge-membership rule: a building joins every area that at least one
    footprint edge intersects or lies within. Mutates the member sets."""
    for cell in areas:
        cell.member_building_ids.clear()
    for b in buildings:
        bminx, bminy, bmaxx, bmaxy = b.footprint.bounds()
        for cell in areas:
            cminx, cminy, cmaxx, cmaxy = cell.boundary.bounds()
            if bmaxx < cminx or bminx > cmaxx or bmaxy < cminy or bminy > cmaxy:
                continue
            if _any_edge_touches(b.footprint, cell.boundary):
                cell.member_building_ids.add(b.source_id)


def _any_edge_touches(footprint: Polygon, boundary: Polygon) -> bool:
    for a, b in footprint.edges():
        if point_in_polygon(a, boundary) or point_in_polygon(b, boundary):
            return True
        if segment_intersections((a, b), boundary):
            return True
    return False


def tile_area_assignment(grid: TileGrid, areas: AreaMap) -> np.ndarray:
    """area id of every tile, by tile-incenter membership."""
    out = np.zeros(grid.n_tiles, dtype=np.int32)
    for tile_id in range(grid.n_tiles):
        out[tile_id] = areas.area_of_point(grid.incenter(tile_id))
    return out


# --------------------------------------------------------------------------
# Candidate sites
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BuildingBlock:
    """A unioned, simplified building block with its incenter precomputed."""

    block_id: int
    solid: BuildingSolid
    incenter: Point2D


def make_blocks(solids: Sequence[BuildingSolid]) -> list[BuildingBlock]:
    blocks = []
    for i, solid in enumerate(solids):
        blocks.append(BuildingBlock(block_id=i, solid=solid,
                                    incenter=polygon_incenter(solid.footprint)))
    return blocks


def candidate_macro_sites(blocks: Sequence[BuildingBlock], bbox: BBox,
                          grid_spacing_m: float,
                          height_range_m: tuple[float, float]) -> list[CandidateSite]:
    """Rooftop macrocell candidates: a square lattice of pitch
    ``grid_spacing_m`` over the bbox, each lattice point mapped to the
    incenter of its nearest block; duplicates collapse."""
    if not blocks:
        raise GeometryError("no building blocks to host macrocell sites")
    if grid_spacing_m <= 0:
        raise ConfigError(f"macro grid spacing must be > 0, got {grid_spacing_m}")
    lo, hi = height_range_m
    chosen: list[int] = []
    seen: set[int] = set()
    y = bbox.min_y
    while y <= bbox.max_y + 1e-9:
        x = bbox.min_x
        while x <= bbox.max_x + 1e-9:
            best_block = min(
                blocks,
                key=lambda blk: ((blk.incenter.x - x) ** 2 + (blk.incenter.y - y) ** 2,
                                 blk.block_id))
            if best_block.block_id not in seen:
                seen.add(best_block.block_id)
                chosen.append(best_block.block_id)
            x += grid_spacing_m
        y += grid_spacing_m
    sites = []
    by_id = {blk.block_id: blk for blk in blocks}
    for site_id, block_id in enumerate(chosen):
        blk = by_id[block_id]
        height = min(max(blk.solid.height, lo), hi)
        sites.append(CandidateSite(site_id=site_id, plane="macrocell",
                                   position=blk.incenter, height_m=height,
                                   origin=SiteOrigin.ROOFTOP_INCENTER))
    return sites


def candidate_femto_sites(lampposts: Sequence[SitePoint],
                          signals: Sequence[SitePoint]) -> list[CandidateSite]:
    """Street-furniture femtocell candidates: lampposts then signals, with
    stable sequential ids. Duplicate positions stay distinct."""
    points = list(lampposts) + list(signals)
    if not points:
        raise GeometryError("no street furniture available for femtocell sites")
    sites = []
    for site_id, sp in enumerate(points):
        origin = SiteOrigin.LAMPPOST if sp.kind == "lamppost" else SiteOrigin.TRAFFIC_SIGNAL
        sites.append(CandidateSite(site_id=site_id, plane="femtocell",
                                   position=sp.position, height_m=sp.height_m,
                                   origin=origin))
    return sites
