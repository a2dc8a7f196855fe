#!/usr/bin/env python3
"""Regenerate the bundled mini-city fixtures (map, trace, scenario config).

The map is a synthetic grid city of ~0.31 km^2: 16 east-west streets and 5
north-south avenues (14 m wide), with 21 m deep building strips between
them, split into ~240 buildings. Heights mix explicit tags, level counts,
and untagged buildings. The trace is 201 one-second timesteps of 200
vehicles plus 200 pedestrians walking the street graph, with traffic
biased toward the north-east so per-area densities contrast strongly.

Deterministic: rerunning reproduces the exact same bytes.
"""

from __future__ import annotations

import gzip
import io
import json
from pathlib import Path

import numpy as np

from v2xsim.geometry import Point2D, local_to_geo

ORIGIN_LAT, ORIGIN_LON = 52.52, 13.405
HALF = 280.0                     # map half-extent, meters
STREET_WIDTH = 14.0
H_STREET_Y = [-262.5 + 35.0 * k for k in range(16)]
V_STREET_X = [-224.0 + 112.0 * k for k in range(5)]
BAND_DEPTH = 21.0

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "v2xsim" / "data"

NODE_BASE = 1_000_000
WAY_BASE = 2_000_000


def _geo(x: float, y: float) -> tuple[float, float]:
    return local_to_geo(Point2D(x, y), ORIGIN_LAT, ORIGIN_LON)


class OsmWriter:
    def __init__(self):
        self.lines: list[str] = []
        self.node_ids: dict[tuple[float, float], int] = {}
        self.next_node = NODE_BASE
        self.next_way = WAY_BASE
        self.node_lines: list[str] = []
        self.way_lines: list[str] = []

    def node(self, x: float, y: float, tags: dict[str, str] | None = None) -> int:
        key = (round(x, 3), round(y, 3))
        if key in self.node_ids and not tags:
            return self.node_ids[key]
        lat, lon = _geo(x, y)
        node_id = self.next_node
        self.next_node += 1
        if not tags:
            self.node_ids[key] = node_id
            self.node_lines.append(
                f'  <node id="{node_id}" lat="{lat:.8f}" lon="{lon:.8f}"/>')
        else:
            tag_str = "".join(f'\n    <tag k="{k}" v="{v}"/>' for k, v in tags.items())
            self.node_lines.append(
                f'  <node id="{node_id}" lat="{lat:.8f}" lon="{lon:.8f}">{tag_str}\n  </node>')
        return node_id

    def way(self, node_ids: list[int], tags: dict[str, str]) -> int:
        way_id = self.next_way
        self.next_way += 1
        refs = "".join(f'\n    <nd ref="{r}"/>' for r in node_ids)
        tag_str = "".join(f'\n    <tag k="{k}" v="{v}"/>' for k, v in tags.items())
        self.way_lines.append(f'  <way id="{way_id}">{refs}{tag_str}\n  </way>')
        return way_id

    def dump(self) -> str:
        minlat, minlon = _geo(-HALF, -HALF)
        maxlat, maxlon = _geo(HALF, HALF)
        head = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            '<osm version="0.6" generator="v2xsim-fixture">',
            f'  <bounds minlat="{minlat:.8f}" minlon="{minlon:.8f}" '
            f'maxlat="{maxlat:.8f}" maxlon="{maxlon:.8f}"/>',
        ]
        return "\n".join(head + self.node_lines + self.way_lines + ["</osm>"]) + "\n"


def building_segments() -> list[tuple[float, float]]:
    """x-extents of buildable strips between avenue faces."""
    faces = []
    xs = [-HALF] + [x for v in V_STREET_X for x in (v - STREET_WIDTH / 2, v + STREET_WIDTH / 2)] + [HALF]
    for i in range(0, len(xs), 2):
        x0, x1 = xs[i], xs[i + 1]
        if x1 - x0 > 10.0:
            faces.append((x0, x1))
    return faces


def add_buildings(writer: OsmWriter) -> int:
    height_cycle = [
        {"height": "18"}, {"building:levels": "5"}, {},
        {"height": "9"}, {"building:levels": "3"}, {},
        {"height": "25.5"}, {}, {"building:levels": "7"}, {"height": "12 m"},
    ]
    count = 0
    segments = building_segments()
    for band in range(len(H_STREET_Y) - 1):
        y0 = H_STREET_Y[band] + STREET_WIDTH / 2
        y1 = H_STREET_Y[band + 1] - STREET_WIDTH / 2
        assert abs((y1 - y0) - BAND_DEPTH) < 1e-9
        for seg_idx, (x0, x1) in enumerate(segments):
            width = x1 - x0
            if width > 60.0:
                n_pieces = 3
            else:
                n_pieces = 2
            use_alley = (band + seg_idx) % 3 == 0
            gap = 2.5 if use_alley else 0.05
            piece_w = (width - (n_pieces - 1) * gap) / n_pieces
            for piece in range(n_pieces):
                px0 = x0 + piece * (piece_w + gap)
                px1 = px0 + piece_w
                tags = {"building": "yes"}
                tags.update(height_cycle[count % len(height_cycle)])
                ring = [(px0, y0), (px1, y0), (px1, y1), (px0, y1)]
                node_ids = [writer.node(x, y) for x, y in ring]
                writer.way(node_ids + [node_ids[0]], tags)
                count += 1
    return count


def add_roads(writer: OsmWriter) -> int:
    # Shared intersection nodes; traffic signals on a deterministic subset.
    intersection: dict[tuple[int, int], int] = {}
    for i, x in enumerate(V_STREET_X):
        for k, y in enumerate(H_STREET_Y):
            tags = {"highway": "traffic_signals"} if (i + k) % 3 == 0 else None
            intersection[(i, k)] = writer.node(x, y, tags)
    n_roads = 0
    for k, y in enumerate(H_STREET_Y):
        nodes = [writer.node(-HALF, y)]
        nodes += [intersection[(i, k)] for i in range(len(V_STREET_X))]
        nodes.append(writer.node(HALF, y))
        writer.way(nodes, {"highway": "residential", "name": f"street-{k}"})
        n_roads += 1
    for i, x in enumerate(V_STREET_X):
        nodes = [writer.node(x, -HALF)]
        nodes += [intersection[(i, k)] for k in range(len(H_STREET_Y))]
        nodes.append(writer.node(x, HALF))
        writer.way(nodes, {"highway": "residential", "name": f"avenue-{i}"})
        n_roads += 1
    # One footpath, excluded from lamppost generation by road class.
    path_nodes = [writer.node(-HALF + 2.0, 269.5), writer.node(HALF - 2.0, 269.5)]
    writer.way(path_nodes, {"highway": "footway"})
    return n_roads


# --------------------------------------------------------------------------
# Mobility trace
# --------------------------------------------------------------------------

def _streets_for_region(region: tuple[float, float, float, float]):
    """(orientation, fixed coordinate, lo, hi) tuples usable inside a region."""
    x0, y0, x1, y1 = region
    out = []
    for y in H_STREET_Y:
        if y0 <= y <= y1:
            out.append(("h", y, max(-HALF, x0), min(HALF, x1)))
    for x in V_STREET_X:
        if x0 <= x <= x1:
            out.append(("v", x, max(-HALF, y0), min(HALF, y1)))
    return out


def make_trace(n_steps: int = 201) -> str:
    rng = np.random.default_rng(240601)
    whole = (-HALF, -HALF, HALF, HALF)
    north_east = (0.0, 0.0, HALF, HALF)
    south_west = (-HALF, -HALF, 0.0, 0.0)

    walkers = []
    for idx in range(400):
        is_vehicle = idx < 200
        pick = rng.random()
        if pick < 0.45:
            region = north_east
        elif pick < 0.60:
            region = south_west
        else:
            region = whole
        streets = _streets_for_region(region)
        orientation, fixed, lo, hi = streets[int(rng.integers(len(streets)))]
        if is_vehicle:
            speed = float(rng.uniform(7.0, 13.0))
            offset = float(rng.choice([-2.0, 2.0]))
            uid = f"veh{idx}"
        else:
            speed = float(rng.uniform(0.8, 1.6))
            offset = float(rng.choice([-5.5, 5.5]))
            uid = f"ped{idx - 200}"
        pos = float(rng.uniform(lo, hi))
        direction = float(rng.choice([-1.0, 1.0]))
        walkers.append(dict(uid=uid, vehicle=is_vehicle, orientation=orientation,
                            fixed=fixed, lo=lo, hi=hi, pos=pos, speed=speed,
                            direction=direction, offset=offset))

    buf = io.StringIO()
    buf.write('<?xml version="1.0" encoding="UTF-8"?>\n<fcd-export>\n')
    for step in range(n_steps):
        buf.write(f'  <timestep time="{float(step):.2f}">\n')
        for w in walkers:
            if w["orientation"] == "h":
                x, y = w["pos"], w["fixed"] + w["offset"]
                angle = 90.0 if w["direction"] > 0 else 270.0
            else:
                x, y = w["fixed"] + w["offset"], w["pos"]
                angle = 0.0 if w["direction"] > 0 else 180.0
            tag = "vehicle" if w["vehicle"] else "person"
            buf.write(f'    <{tag} id="{w["uid"]}" x="{x:.2f}" y="{y:.2f}" '
                      f'angle="{angle:.2f}" speed="{w["speed"]:.2f}"/>\n')
            w["pos"] += w["direction"] * w["speed"]
            if w["pos"] > w["hi"]:
                w["pos"] = w["hi"] - (w["pos"] - w["hi"])
                w["direction"] = -w["direction"]
            elif w["pos"] < w["lo"]:
                w["pos"] = w["lo"] + (w["lo"] - w["pos"])
                w["direction"] = -w["direction"]
        buf.write("  </timestep>\n")
    buf.write("</fcd-export>\n")
    return buf.getvalue()


SCENARIO = {
    "map_path": "mini_city.osm",
    "map_center_lat_lon": [ORIGIN_LAT, ORIGIN_LON],
    "tile_size_m": 8.0,
    "area_shape": "square",
    "area_size_m": 200.0,
    "sites": {
        "lamppost_spacing_m": 24.0,
        "lamppost_lateral_offset_m": 3.0,
        "femto_mount_height_range_m": [6.0, 8.0],
        "macro_grid_spacing_m": 250.0,
    },
    "placement": {"femto_coverage_target": 0.9},
    "planes": {
        "femtocell": {"min_site_separation_m": 20.0},
    },
    "mobility": {
        "source": "fcd",
        "fcd_path": "mini_city_fcd.xml.gz",
        "step_length_s": 1.0,
    },
    "indoor": {
        "weibull_shape_k": 0.8,
        "weibull_scale_lambda": 10.0,
        "cap_per_building": 100,
        "refresh_epoch_s": 60.0,
    },
    "seeds": {"world_seed": 11, "run_seed": 7},
}


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    writer = OsmWriter()
    n_buildings = add_buildings(writer)
    n_roads = add_roads(writer)
    (DATA_DIR / "mini_city.osm").write_text(writer.dump())
    trace_xml = make_trace()
    raw = io.BytesIO()
    with gzip.GzipFile(fileobj=raw, mode="wb", filename="", mtime=0) as gz:
        gz.write(trace_xml.encode("utf-8"))
    (DATA_DIR / "mini_city_fcd.xml.gz").write_bytes(raw.getvalue())
    (DATA_DIR / "mini_city.json").write_text(json.dumps(SCENARIO, indent=2) + "\n")
    print(f"buildings={n_buildings} roads={n_roads} "
          f"map={len(writer.dump())} bytes trace={len(raw.getvalue())} bytes gz")


if __name__ == "__main__":
    main()
