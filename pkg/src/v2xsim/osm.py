"""OpenStreetMap extract ingestion.

Parses an ``.osm`` XML document (nodes + ways only) into buildings with
seeded heights, road segments split at junctions, traffic-signal sites,
and artificially generated lamppost sites along the roads.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from io import BytesIO

from .errors import MapDataError
from .geometry import GeometryError, Point2D, Polygon, BuildingSolid, project_to_local
from .rng import generator

METERS_PER_BUILDING_LEVEL = 3.0

# Road classes that receive lampposts by default (footways and paths do not).
DEFAULT_LAMPPOST_ROAD_CLASSES = (
    "motorway", "trunk", "primary", "secondary", "tertiary",
    "unclassified", "residential", "living_street", "service",
)


@dataclass
class OsmNode:
    node_id: int
    lat: float
    lon: float
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class OsmWay:
    way_id: int
    node_refs: list[int]
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class OsmData:
    """Resolved raw model: every way's node refs exist in ``nodes``."""

    nodes: dict[int, OsmNode]
    ways: list[OsmWay]
    bounds: tuple[float, float, float, float] | None  # minlat, minlon, maxlat, maxlon
    dropped_way_count: int


@dataclass(frozen=True)
class RoadSegment:
    """A stretch of road between two junctions (or way ends)."""

    segment_id: str
    centerline: tuple[Point2D, ...]
    junction_endpoints: tuple[bool, bool]
    highway_class: str
    width_hint_m: float | None = None

    def length_m(self) -> float:
        total = 0.0
        for a, b in zip(self.centerline, self.centerline[1:]):
            total += math.hypot(b.x - a.x, b.y - a.y)
        return total


@dataclass(frozen=True)
class SitePoint:
    """A street-furniture mounting point for a femtocell."""

    position: Point2D
    kind: str  # "traffic_signal" | "lamppost"
    height_m: float


@dataclass
class BuildingExtraction:
    buildings: list[BuildingSolid]
    skipped_invalid: int
    bad_height_tags: int


def parse_osm(document: bytes) -> OsmData:
    """Parse an OSM XML document into a resolved node/way model.

    Ways referencing missing nodes are dropped (counted); an empty or
    malformed document raises MapDataError.
    """
    try:
        tree = ET.parse(BytesIO(document))
    except ET.ParseError as exc:
        line, col = exc.position
        raise MapDataError(f"malformed OSM XML at line {line}, column {col}: {exc.msg}") from exc
    root = tree.getroot()
    if root.tag != "osm":
        raise MapDataError(f"expected <osm> root element, found <{root.tag}>")

    bounds = None
    bounds_el = root.find("bounds")
    if bounds_el is not None:
        try:
            bounds = (float(bounds_el.get("minlat")), float(bounds_el.get("minlon")),
                      float(bounds_el.get("maxlat")), float(bounds_el.get("maxlon")))
        except (TypeError, ValueError) as exc:
            raise MapDataError("malformed <bounds> element") from exc

    nodes: dict[int, OsmNode] = {}
    for el in root.iter("node"):
        try:
            node_id = int(el.get("id"))
            lat = float(el.get("lat"))
            lon = float(el.get("lon"))
        except (TypeError, ValueError) as exc:
            raise MapDataError(f"node element missing id/lat/lon: {ET.tostring(el)[:80]!r}") from exc
        tags = {t.get("k"): t.get("v") for t in el.findall("tag")}
        nodes[node_id] = OsmNode(node_id, lat, lon, tags)
    if not nodes:
        raise MapDataError("OSM document contains no nodes")

    ways: list[OsmWay] = []
    dropped = 0
    for el in root.iter("way"):
        try:
            way_id = int(el.get("id"))
        except (TypeError, ValueError) as exc:
            raise MapDataError("way element missing id") from exc
        refs = []
        resolved = True
        for nd in el.findall("nd"):
            try:
                ref = int(nd.get("ref"))
            except (TypeError, ValueError) as exc:
                raise MapDataError(f"way {way_id} has a malformed <nd> ref") from exc
            if ref not in nodes:
                resolved = False
                break
            refs.append(ref)
        if not resolved:
            dropped += 1
            continue
        tags = {t.get("k"): t.get("v") for t in el.findall("tag")}
        ways.append(OsmWay(way_id, refs, tags))
    return OsmData(nodes=nodes, ways=ways, bounds=bounds, dropped_way_count=dropped)


def _parse_height_tag(value: str) -> float | None:
    cleaned = value.strip().lower().removesuffix("m").strip()
    try:
        height = float(cleaned)
    except ValueError:
        return None
    return height if height > 0 else None


def extract_buildings(raw: OsmData, origin: tuple[float, float],
                      height_range_m: tuple[float, float], seed: int,
                      levels_to_m: float = METERS_PER_BUILDING_LEVEL) -> BuildingExtraction:
    """Closed ways tagged ``building`` become footprint solids.

    Height comes from the ``height`` tag, else ``building:levels`` times
    ``levels_to_m``, else a uniform draw in ``height_range_m`` keyed by
    (seed, way id) so the value is independent of input order.
    """
    lo, hi = height_range_m
    if lo <= 0 or lo > hi:
        raise MapDataError(f"building height range invalid: {height_range_m}")
    out: list[BuildingSolid] = []
    skipped = 0
    bad_tags = 0
    for way in raw.ways:
        tags = way.tags
        if tags.get("building", "no") == "no":
            continue
        refs = way.node_refs
        if len(refs) >= 2 and refs[0] == refs[-1]:
            refs = refs[:-1]
        if len(refs) < 3:
            skipped += 1
            continue
        pts = []
        for ref in refs:
            node = raw.nodes[ref]
            pts.append(project_to_local(node.lat, node.lon, origin[0], origin[1]))
        try:
            footprint = Polygon(pts)
        except GeometryError:
            skipped += 1
            continue
        if not footprint.is_simple():
            skipped += 1
            continue

        height = None
        if "height" in tags:
            height = _parse_height_tag(tags["height"])
            if height is None:
                bad_tags += 1
        if height is None and "building:levels" in tags:
            levels = _parse_height_tag(tags["building:levels"])
            if levels is not None:
                height = levels * levels_to_m
            else:
                bad_tags += 1
        if height is None:
            height = float(generator(seed, "building-height", way.way_id).uniform(lo, hi))
        out.append(BuildingSolid(footprint=footprint, height=height, source_id=str(way.way_id)))
    return BuildingExtraction(buildings=out, skipped_invalid=skipped, bad_height_tags=bad_tags)


def extract_roads(raw: OsmData, origin: tuple[float, float]) -> list[RoadSegment]:
    """Highway ways split at shared junction nodes.

    A node is a junction when it appears in more than one highway way (or
    more than once in the same way).
    """
    highway_ways = [w for w in raw.ways if "highway" in w.tags and len(w.node_refs) >= 2]
    use_count: dict[int, int] = {}
    for way in highway_ways:
        for ref in way.node_refs:
            use_count[ref] = use_count.get(ref, 0) + 1
    segments: list[RoadSegment] = []
    for way in highway_ways:
        width_hint = None
        if "width" in way.tags:
            width_hint = _parse_height_tag(way.tags["width"])
        refs = way.node_refs
        cut_indices = [0]
        for i in range(1, len(refs) - 1):
            if use_count[refs[i]] > 1:
                cut_indices.append(i)
        cut_indices.append(len(refs) - 1)
        part = 0
        for a, b in zip(cut_indices, cut_indices[1:]):
            chunk = refs[a:b + 1]
            pts: list[Point2D] = []
            for ref in chunk:
                node = raw.nodes[ref]
                p = project_to_local(node.lat, node.lon, origin[0], origin[1])
                if pts and p == pts[-1]:
                    continue
                pts.append(p)
            if len(pts) < 2:
                continue
            segments.append(RoadSegment(
                segment_id=f"{way.way_id}:{part}",
                centerline=tuple(pts),
                junction_endpoints=(use_count[chunk[0]] > 1, use_count[chunk[-1]] > 1),
                highway_class=way.tags["highway"],
                width_hint_m=width_hint,
            ))
            part += 1
    return segments


def extract_traffic_signals(raw: OsmData, origin: tuple[float, float],
                            height_range_m: tuple[float, float], seed: int) -> list[SitePoint]:
    """Nodes tagged ``highway=traffic_signals``, with seeded mounting heights."""
    lo, hi = height_range_m
    out = []
    for node_id in sorted(raw.nodes):
        node = raw.nodes[node_id]
        if node.tags.get("highway") != "traffic_signals":
            continue
        height = float(generator(seed, "signal-height", node_id).uniform(lo, hi))
        position = project_to_local(node.lat, node.lon, origin[0], origin[1])
        out.append(SitePoint(position=position, kind="traffic_signal", height_m=height))
    return out


def _point_along(centerline: tuple[Point2D, ...], arc: float) -> tuple[Point2D, Point2D]:
    """Point at arc length plus the unit direction of its segment."""
    remaining = arc
    for a, b in zip(centerline, centerline[1:]):
        seg = math.hypot(b.x - a.x, b.y - a.y)
        if remaining <= seg or (a, b) == (centerline[-2], centerline[-1]):
            t = remaining / seg
            t = min(max(t, 0.0), 1.0)
            ux, uy = (b.x - a.x) / seg, (b.y - a.y) / seg
            return Point2D(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)), Point2D(ux, uy)
        remaining -= seg
    a, b = centerline[-2], centerline[-1]
    seg = math.hypot(b.x - a.x, b.y - a.y)
    return b, Point2D((b.x - a.x) / seg, (b.y - a.y) / seg)


def generate_lampposts(road: RoadSegment, spacing_m: float, lateral_offset_m: float,
                       height_range_m: tuple[float, float], seed: int) -> list[SitePoint]:
    """Equal-spacing lamppost pairs along one road segment.

    The centerline is divided into ceil(len/spacing) equal pieces; each
    interior division point spawns one post on each side, perpendicular to
    the local road direction. Division points at the junctions themselves
    are skipped (traffic signals live there).
    """
    if spacing_m <= 0:
        raise MapDataError(f"lamppost spacing must be > 0, got {spacing_m}")
    if lateral_offset_m < 0:
        raise MapDataError(f"lateral offset must be >= 0, got {lateral_offset_m}")
    length = road.length_m()
    if length == 0.0:
        return []
    n_pieces = math.ceil(length / spacing_m)
    lo, hi = height_range_m
    posts: list[SitePoint] = []
    for k in range(1, n_pieces):
        arc = length * k / n_pieces
        point, direction = _point_along(road.centerline, arc)
        normal = Point2D(-direction.y, direction.x)
        for side, sign in (("left", 1.0), ("right", -1.0)):
            pos = Point2D(point.x + sign * lateral_offset_m * normal.x,
                          point.y + sign * lateral_offset_m * normal.y)
            height = float(generator(seed, "lamp-height", road.segment_id, k, side).uniform(lo, hi))
            posts.append(SitePoint(position=pos, kind="lamppost", height_m=height))
    return posts


def generate_all_lampposts(roads: list[RoadSegment], spacing_m: float,
                           lateral_offset_m: float, height_range_m: tuple[float, float],
                           seed: int,
                           road_classes: tuple[str, ...] = DEFAULT_LAMPPOST_ROAD_CLASSES,
                           ) -> list[SitePoint]:
    posts: list[SitePoint] = []
    for road in roads:
        if road.highway_class not in road_classes:
            continue
        posts.extend(generate_lampposts(road, spacing_m, lateral_offset_m, height_range_m, seed))
    return posts
