"""Static world assembly and link-cache orchestration.

Builds everything that exists before the first simulation step: parsed
map, conditioned building blocks, tessellations, candidate sites, and the
per-plane link caches (loaded from disk when the digests still match,
recomputed and saved otherwise).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linkcache, osm
from .config import (
    ScenarioConfig,
    geometry_config_digest,
    map_digest,
    plane_config_digest,
)
from .errors import CacheError, MapDataError
from .geometry import (
    BuildingSolid,
    Point2D,
    point_in_polygon,
    polygon_incenter,
    polygon_union,
    project_to_local,
    simplify_ring,
)
from .radio import RadioPlaneConfig
from .sightlines import WallField
from .world import (
    AreaMap,
    AreaShape,
    BBox,
    BuildingBlock,
    CandidateSite,
    TileGrid,
    assign_buildings,
    candidate_femto_sites,
    candidate_macro_sites,
    make_blocks,
    tile_area_assignment,
)


@dataclass
class World:
    """Everything static about a scenario's map."""

    config: ScenarioConfig
    origin: tuple[float, float]
    bbox: BBox
    buildings: list[BuildingSolid]
    blocks: list[BuildingBlock]
    grid: TileGrid
    area_map: AreaMap
    tile_area: np.ndarray
    macro_candidates: list[CandidateSite]
    femto_candidates: list[CandidateSite]
    building_incenter_tile: dict[str, int]
    wall_field: WallField
    map_bytes_digest: bytes
    stats: dict = field(default_factory=dict)

    @property
    def n_tiles(self) -> int:
        return self.grid.n_tiles


def build_world(cfg: ScenarioConfig) -> World:
    """Deterministic world construction from a scenario configuration."""
    try:
        map_bytes = Path(cfg.map_path).read_bytes()
    except OSError as exc:
        raise MapDataError(f"cannot read map {cfg.map_path}: {exc}") from exc
    raw = osm.parse_osm(map_bytes)

    if cfg.map_center is not None:
        origin = cfg.map_center
    elif raw.bounds is not None:
        origin = ((raw.bounds[0] + raw.bounds[2]) / 2.0,
                  (raw.bounds[1] + raw.bounds[3]) / 2.0)
    else:
        raise MapDataError("map has no <bounds>; set map_center_lat_lon in the config")

    if raw.bounds is not None:
        p_min = project_to_local(raw.bounds[0], raw.bounds[1], origin[0], origin[1])
        p_max = project_to_local(raw.bounds[2], raw.bounds[3], origin[0], origin[1])
        bbox = BBox(p_min.x, p_min.y, p_max.x, p_max.y)
    else:
        xs, ys = [], []
        for node in raw.nodes.values():
            p = project_to_local(node.lat, node.lon, origin[0], origin[1])
            xs.append(p.x)
            ys.append(p.y)
        bbox = BBox(min(xs), min(ys), max(xs), max(ys))

    world_seed = cfg.seeds.world_seed
    extraction = osm.extract_buildings(raw, origin, cfg.heights.building_height_range_m,
                                       world_seed, cfg.heights.levels_to_m)
    buildings = extraction.buildings
    roads = osm.extract_roads(raw, origin)
    signals = osm.extract_traffic_signals(raw, origin, cfg.sites.femto_mount_height_range_m,
                                          world_seed)
    lampposts = osm.generate_all_lampposts(
        roads, cfg.sites.lamppost_spacing_m, cfg.sites.lamppost_lateral_offset_m,
        cfg.sites.femto_mount_height_range_m, world_seed,
        road_classes=cfg.sites.lamppost_road_classes)

    # Union touching footprints into solid blocks, drop courtyards, smooth.
    merged = polygon_union([b.footprint for b in buildings],
                           gap_close_m=cfg.geometry.gap_close_m,
                           min_area_m2=cfg.geometry.min_block_area_m2)
    block_solids = []
    slack = 2.0 * cfg.geometry.gap_close_m + cfg.geometry.simplify_tolerance_m
    for poly in merged:
        smoothed = simplify_ring(poly, cfg.geometry.simplify_tolerance_m)
        pminx, pminy, pmaxx, pmaxy = smoothed.bounds()
        members = []
        for b in buildings:
            bminx, bminy, bmaxx, bmaxy = b.footprint.bounds()
            if (bminx > pmaxx + slack or bmaxx < pminx - slack
                    or bminy > pmaxy + slack or bmaxy < pminy - slack):
                continue
            if _contains_representative_point(smoothed, b, cfg.geometry.gap_close_m):
                members.append(b)
        height = max((b.height for b in members), default=None)
        if height is None:
            height = max(b.height for b in buildings)
        block_solids.append(BuildingSolid(footprint=smoothed, height=height,
                                          source_id=f"block-{len(block_solids)}"))
    blocks = make_blocks(block_solids)

    grid = TileGrid(bbox, cfg.tile_size_m)
    area_map = AreaMap(bbox, AreaShape(cfg.area_shape), cfg.area_size_m)
    assign_buildings(area_map.cells, buildings)
    tile_area = tile_area_assignment(grid, area_map)

    macro_sites = candidate_macro_sites(blocks, bbox, cfg.sites.macro_grid_spacing_m,
                                        cfg.macro_plane.bs_height_range_m)
    femto_sites = candidate_femto_sites(lampposts, signals)

    incenter_tiles = {}
    for b in buildings:
        incenter_tiles[b.source_id] = grid.nearest_tile(polygon_incenter(b.footprint))

    wall_field = WallField.from_solids([blk.solid for blk in blocks])

    return World(
        config=cfg, origin=origin, bbox=bbox, buildings=buildings, blocks=blocks,
        grid=grid, area_map=area_map, tile_area=tile_area,
        macro_candidates=macro_sites, femto_candidates=femto_sites,
        building_incenter_tile=incenter_tiles, wall_field=wall_field,
        map_bytes_digest=map_digest(map_bytes),
        stats={
            "n_buildings": len(buildings),
            "n_blocks": len(blocks),
            "n_roads": len(roads),
            "n_signals": len(signals),
            "n_lampposts": len(lampposts),
            "skipped_invalid_buildings": extraction.skipped_invalid,
            "bad_height_tags": extraction.bad_height_tags,
            "dropped_ways": raw.dropped_way_count,
        },
    )


def _contains_representative_point(block_poly, building: BuildingSolid,
                                   gap_close_m: float) -> bool:
    rep = Point2D(*building.footprint.points.mean(axis=0))
    if point_in_polygon(rep, block_poly):
        return True
    # Concave footprints: fall back to vertex proximity with the gap slack.
    for v in building.footprint.points:
        if point_in_polygon(Point2D(v[0], v[1]), block_poly):
            return True
    return False


@dataclass
class CacheBundle:
    macro: linkcache.LinkTable
    femto: linkcache.LinkTable
    timings: dict[str, float]
    loaded: dict[str, bool]


def cache_path(cfg: ScenarioConfig, plane: RadioPlaneConfig) -> Path:
    return cfg.cache_dir / f"links_{plane.plane.value}_{cfg.tile_size_m:g}m.bin"


def _plane_sites(world: World, plane: RadioPlaneConfig) -> list[CandidateSite]:
    return world.macro_candidates if plane.plane.value == "macrocell" else world.femto_candidates


def build_or_load_cache(world: World, plane: RadioPlaneConfig,
                        workers: int | None = None,
                        force_rebuild: bool = False) -> tuple[linkcache.LinkTable, dict]:
    """Load the plane's cache when digests match, otherwise precompute and save."""
    cfg = world.config
    sites = _plane_sites(world, plane)
    path = cache_path(cfg, plane)
    digests = dict(
        expected_map_digest=world.map_bytes_digest,
        expected_geometry_digest=geometry_config_digest(cfg),
        expected_plane_digest=plane_config_digest(cfg, plane),
    )
    info: dict = {"path": str(path), "plane": plane.plane.value}
    if path.exists() and not force_rebuild:
        t0 = time.perf_counter()
        try:
            _, table = linkcache.load(path, n_tiles=world.n_tiles, n_sites=len(sites),
                                      **digests)
        except CacheError:
            pass  # stale or damaged: fall through and rebuild
        else:
            info.update(loaded=True, seconds=time.perf_counter() - t0, records=len(table))
            return table, info
    t0 = time.perf_counter()
    table = linkcache.precompute(world.grid, sites, [blk.solid for blk in world.blocks],
                                 plane, user_height_m=cfg.user_height_m,
                                 cull_margin_db=cfg.cull_margin_db, workers=workers,
                                 wall_field=world.wall_field)
    precompute_s = time.perf_counter() - t0
    path.parent.mkdir(parents=True, exist_ok=True)
    header = linkcache.CacheHeader(
        format_version=linkcache.CACHE_VERSION,
        map_digest=digests["expected_map_digest"],
        geometry_config_digest=digests["expected_geometry_digest"],
        plane_config_digest=digests["expected_plane_digest"],
        tile_size_m=cfg.tile_size_m,
        record_count=len(table),
    )
    linkcache.save(table, header, path)
    info.update(loaded=False, seconds=precompute_s, records=len(table))
    return table, info


def build_or_load_caches(world: World, workers: int | None = None,
                         force_rebuild: bool = False) -> CacheBundle:
    cfg = world.config
    macro, macro_info = build_or_load_cache(world, cfg.macro_plane, workers, force_rebuild)
    femto, femto_info = build_or_load_cache(world, cfg.femto_plane, workers, force_rebuild)
    return CacheBundle(
        macro=macro, femto=femto,
        timings={"macrocell_s": macro_info["seconds"], "femtocell_s": femto_info["seconds"]},
        loaded={"macrocell": macro_info["loaded"], "femtocell": femto_info["loaded"]},
    )
