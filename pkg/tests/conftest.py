"""Shared fixtures: a hand-built tiny world and the bundled mini-city engine."""

import pytest

from v2xsim.config import config_from_dict
from v2xsim.engine import Engine
from v2xsim.geometry import BuildingSolid, Point2D, Polygon
from v2xsim.linkcache import precompute
from v2xsim.scenario import CacheBundle, World
from v2xsim.sightlines import WallField
from v2xsim.world import (
    AreaMap,
    AreaShape,
    BBox,
    CandidateSite,
    SiteOrigin,
    TileGrid,
    make_blocks,
    tile_area_assignment,
)


def square(x0, y0, side):
    return Polygon([(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)])


def tiny_config(**overrides):
    raw = {
        "map_path": "unused.osm",
        "map_center_lat_lon": [0.0, 0.0],
        "tile_size_m": 8.0,
        "area_size_m": 40.0,
        "mobility": {
            "source": "synth",
            "synth_vehicles": 12,
            "synth_pedestrians": 6,
            "synth_horizon_s": 60.0,
        },
        "indoor": {"weibull_scale_lambda": 4.0, "refresh_epoch_s": 10.0},
        "placement": {"femto_coverage_target": 0.9},
        "planes": {"femtocell": {"min_site_separation_m": 0.0}},
        "seeds": {"world_seed": 3, "run_seed": 5},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(raw.get(key), dict):
            raw[key] = {**raw[key], **value}
        else:
            raw[key] = value
    return config_from_dict(raw)


def build_tiny_engine(**overrides) -> Engine:
    """An 80x80 m synthetic scene: 4 buildings, 12 femto posts, 1 macro."""
    cfg = tiny_config(**overrides)
    bbox = BBox(0.0, 0.0, 80.0, 80.0)
    grid = TileGrid(bbox, cfg.tile_size_m)
    area_map = AreaMap(bbox, AreaShape(cfg.area_shape), cfg.area_size_m)
    buildings = [
        BuildingSolid(square(10, 10, 16), height=12.0, source_id="b0"),
        BuildingSolid(square(50, 10, 16), height=20.0, source_id="b1"),
        BuildingSolid(square(10, 50, 16), height=8.0, source_id="b2"),
        BuildingSolid(square(50, 50, 16), height=25.0, source_id="b3"),
    ]
    blocks = make_blocks(buildings)
    femto = [CandidateSite(i, "femtocell",
                           Point2D(4.0 + 24.0 * (i % 4), 4.0 + 24.0 * (i // 4)),
                           7.0, SiteOrigin.LAMPPOST)
             for i in range(12)]
    macro = [CandidateSite(0, "macrocell", blocks[3].incenter, 25.0,
                           SiteOrigin.ROOFTOP_INCENTER)]
    wall_field = WallField.from_solids(buildings)
    world = World(
        config=cfg, origin=(0.0, 0.0), bbox=bbox, buildings=buildings, blocks=blocks,
        grid=grid, area_map=area_map, tile_area=tile_area_assignment(grid, area_map),
        macro_candidates=macro, femto_candidates=femto,
        building_incenter_tile={b.source_id: grid.nearest_tile(blk.incenter)
                                for b, blk in zip(buildings, blocks)},
        wall_field=wall_field, map_bytes_digest=b"\x00" * 32,
    )
    caches = CacheBundle(
        macro=precompute(grid, macro, buildings, cfg.macro_plane,
                         user_height_m=cfg.user_height_m,
                         cull_margin_db=cfg.cull_margin_db, wall_field=wall_field),
        femto=precompute(grid, femto, buildings, cfg.femto_plane,
                         user_height_m=cfg.user_height_m,
                         cull_margin_db=cfg.cull_margin_db, wall_field=wall_field),
        timings={"macrocell_s": 0.0, "femtocell_s": 0.0},
        loaded={"macrocell": False, "femtocell": False},
    )
    return Engine(world, caches)


@pytest.fixture
def tiny_engine() -> Engine:
    return build_tiny_engine()


@pytest.fixture(scope="session")
def bundled_engine(tmp_path_factory) -> Engine:
    """The bundled mini-city, built once per session (reset before each use)."""
    from v2xsim.config import load_config
    from v2xsim.data import write_bundled_config

    tmp = tmp_path_factory.mktemp("bundled")
    cfg_path = write_bundled_config(tmp)
    return Engine.from_config(load_config(cfg_path))


MICRO_ORIGIN = (48.14, 11.58)


def write_micro_map(path) -> None:
    """A 120x120 m four-building block with two crossing roads."""
    from v2xsim.geometry import Point2D, local_to_geo

    lines = ['<?xml version="1.0"?>', '<osm version="0.6">']
    sw = local_to_geo(Point2D(-60, -60), *MICRO_ORIGIN)
    ne = local_to_geo(Point2D(60, 60), *MICRO_ORIGIN)
    lines.append(f'  <bounds minlat="{sw[0]:.8f}" minlon="{sw[1]:.8f}" '
                 f'maxlat="{ne[0]:.8f}" maxlon="{ne[1]:.8f}"/>')
    next_id = [100]

    def node(x, y, tags=""):
        lat, lon = local_to_geo(Point2D(x, y), *MICRO_ORIGIN)
        nid = next_id[0]
        next_id[0] += 1
        if tags:
            lines.append(f'  <node id="{nid}" lat="{lat:.8f}" lon="{lon:.8f}">{tags}</node>')
        else:
            lines.append(f'  <node id="{nid}" lat="{lat:.8f}" lon="{lon:.8f}"/>')
        return nid

    def way(refs, tags):
        wid = next_id[0]
        next_id[0] += 1
        nd = "".join(f'<nd ref="{r}"/>' for r in refs)
        tag = "".join(f'<tag k="{k}" v="{v}"/>' for k, v in tags.items())
        lines.append(f'  <way id="{wid}">{nd}{tag}</way>')
        return wid

    for (x0, y0), tags in (
        ((-50, -50), {"building": "yes", "height": "15"}),
        ((10, -50), {"building": "yes", "building:levels": "4"}),
        ((-50, 10), {"building": "yes"}),
        ((10, 10), {"building": "yes", "height": "22"}),
    ):
        corners = [node(x0, y0), node(x0 + 40, y0), node(x0 + 40, y0 + 40),
                   node(x0, y0 + 40)]
        way(corners + [corners[0]], tags)
    center = node(0, 0, '<tag k="highway" v="traffic_signals"/>')
    way([node(-60, 0), center, node(60, 0)], {"highway": "residential"})
    way([node(0, -60), center, node(0, 60)], {"highway": "residential"})
    lines.append("</osm>")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def micro_config(tmp_path):
    """A runnable config on the micro map with synthetic mobility."""
    import json as _json

    map_path = tmp_path / "micro.osm"
    write_micro_map(map_path)
    raw = {
        "map_path": "micro.osm",
        "tile_size_m": 8.0,
        "area_size_m": 60.0,
        "cache_dir": str(tmp_path / "cache"),
        "sites": {"lamppost_spacing_m": 20.0, "femto_mount_height_range_m": [6.0, 8.0],
                  "macro_grid_spacing_m": 100.0},
        "planes": {"femtocell": {"min_site_separation_m": 0.0}},
        "mobility": {"source": "synth", "synth_vehicles": 8, "synth_pedestrians": 4,
                     "synth_horizon_s": 30.0},
        "indoor": {"weibull_scale_lambda": 3.0},
        "seeds": {"world_seed": 2, "run_seed": 4},
        "horizon_steps": 10,
    }
    cfg_path = tmp_path / "micro.json"
    cfg_path.write_text(_json.dumps(raw, indent=2))
    return cfg_path
