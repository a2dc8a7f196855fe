"""Map ingestion tests: parsing, height seeding, road splitting, lampposts."""

import math
import re

import numpy as np
import pytest

from v2xsim.data import bundled_map_path
from v2xsim.errors import MapDataError
from v2xsim.geometry import Point2D, point_segment_distance
from v2xsim.osm import (
    RoadSegment,
    extract_buildings,
    extract_roads,
    extract_traffic_signals,
    generate_all_lampposts,
    generate_lampposts,
    parse_osm,
)

ORIGIN = (52.52, 13.405)
RNG = np.random.default_rng(7)


def osm_doc(body: str) -> bytes:
    return (f'<?xml version="1.0"?>\n<osm version="0.6">\n{body}\n</osm>').encode()


def node(nid, lat, lon, tags=""):
    if tags:
        return f'<node id="{nid}" lat="{lat}" lon="{lon}">{tags}</node>'
    return f'<node id="{nid}" lat="{lat}" lon="{lon}"/>'


def building_way(wid, refs, tags='<tag k="building" v="yes"/>'):
    nds = "".join(f'<nd ref="{r}"/>' for r in refs)
    return f'<way id="{wid}">{nds}{tags}</way>'


def square_nodes(next_id, lat0, lon0, d=0.0002):
    ids = list(range(next_id, next_id + 4))
    text = "\n".join([
        node(ids[0], lat0, lon0),
        node(ids[1], lat0, lon0 + d),
        node(ids[2], lat0 + d, lon0 + d),
        node(ids[3], lat0 + d, lon0),
    ])
    return ids, text


class TestParse:
    def test_minimal_building(self):
        ids, nodes_text = square_nodes(1, 52.52, 13.405)
        doc = osm_doc(nodes_text + "\n" + building_way(10, ids + [ids[0]]))
        raw = parse_osm(doc)
        assert len(raw.ways) == 1
        assert raw.dropped_way_count == 0

    def test_way_with_missing_node_dropped(self):
        ids, nodes_text = square_nodes(1, 52.52, 13.405)
        doc = osm_doc(nodes_text
                      + "\n" + building_way(10, ids + [ids[0]])
                      + "\n" + building_way(11, [1, 2, 999, 1]))
        raw = parse_osm(doc)
        assert len(raw.ways) == 1
        assert raw.dropped_way_count == 1

    def test_malformed_document_names_position(self):
        with pytest.raises(MapDataError, match=r"line \d+"):
            parse_osm(b"<osm><node id='1' lat='1'")

    def test_empty_map_rejected(self):
        with pytest.raises(MapDataError, match="no nodes"):
            parse_osm(osm_doc(""))

    def test_bundled_counts_match_text_scan(self):
        text = bundled_map_path().read_text()
        raw = parse_osm(bundled_map_path().read_bytes())
        building_ways = extract_buildings(raw, ORIGIN, (6.0, 30.0), seed=1).buildings
        assert len(building_ways) == len(re.findall(r'<tag k="building"', text))
        signals = extract_traffic_signals(raw, ORIGIN, (6.0, 8.0), seed=1)
        assert len(signals) == len(re.findall(r'v="traffic_signals"', text))


class TestBuildings:
    def _extract_one(self, tags):
        ids, nodes_text = square_nodes(1, 52.52, 13.405)
        doc = osm_doc(nodes_text + "\n" + building_way(
            10, ids + [ids[0]], f'<tag k="building" v="yes"/>{tags}'))
        raw = parse_osm(doc)
        return extract_buildings(raw, ORIGIN, (6.0, 30.0), seed=42)

    def test_height_tag_passthrough(self):
        out = self._extract_one('<tag k="height" v="25"/>')
        assert out.buildings[0].height == 25.0

    def test_levels_times_three(self):
        out = self._extract_one('<tag k="building:levels" v="4"/>')
        assert out.buildings[0].height == 12.0

    def test_bad_height_falls_back_counted(self):
        out = self._extract_one('<tag k="height" v="tall"/>')
        assert out.bad_height_tags == 1
        assert 6.0 <= out.buildings[0].height <= 30.0

    def test_untagged_height_seeded_and_order_independent(self):
        ids_a, nodes_a = square_nodes(1, 52.52, 13.405)
        ids_b, nodes_b = square_nodes(5, 52.521, 13.406)
        w_ab = building_way(10, ids_a + [ids_a[0]]) + "\n" + building_way(11, ids_b + [ids_b[0]])
        w_ba = building_way(11, ids_b + [ids_b[0]]) + "\n" + building_way(10, ids_a + [ids_a[0]])
        doc_ab = osm_doc(nodes_a + "\n" + nodes_b + "\n" + w_ab)
        doc_ba = osm_doc(nodes_a + "\n" + nodes_b + "\n" + w_ba)
        out_ab = extract_buildings(parse_osm(doc_ab), ORIGIN, (6.0, 30.0), seed=42)
        out_ba = extract_buildings(parse_osm(doc_ba), ORIGIN, (6.0, 30.0), seed=42)
        h_ab = {b.source_id: b.height for b in out_ab.buildings}
        h_ba = {b.source_id: b.height for b in out_ba.buildings}
        assert h_ab == h_ba
        rerun = extract_buildings(parse_osm(doc_ab), ORIGIN, (6.0, 30.0), seed=42)
        assert {b.source_id: b.height for b in rerun.buildings} == h_ab
        assert all(6.0 <= h <= 30.0 for h in h_ab.values())


class TestRoads:
    def test_shared_node_marks_junction(self):
        body = "\n".join([
            node(1, 52.520, 13.400), node(2, 52.520, 13.410), node(3, 52.525, 13.405),
            '<way id="20"><nd ref="1"/><nd ref="2"/><tag k="highway" v="residential"/></way>',
            '<way id="21"><nd ref="3"/><nd ref="2"/><tag k="highway" v="residential"/></way>',
        ])
        roads = extract_roads(parse_osm(osm_doc(body)), ORIGIN)
        assert len(roads) == 2
        assert roads[0].junction_endpoints == (False, True)
        assert roads[1].junction_endpoints == (False, True)

    def test_way_split_at_interior_junction(self):
        body = "\n".join([
            node(1, 52.520, 13.400), node(2, 52.520, 13.405), node(3, 52.520, 13.410),
            node(4, 52.525, 13.405),
            '<way id="20"><nd ref="1"/><nd ref="2"/><nd ref="3"/>'
            '<tag k="highway" v="residential"/></way>',
            '<way id="21"><nd ref="4"/><nd ref="2"/><tag k="highway" v="residential"/></way>',
        ])
        roads = extract_roads(parse_osm(osm_doc(body)), ORIGIN)
        by_id = {r.segment_id: r for r in roads}
        assert set(by_id) == {"20:0", "20:1", "21:0"}
        assert by_id["20:0"].junction_endpoints == (False, True)
        assert by_id["20:1"].junction_endpoints == (True, False)

    def test_traffic_signal_node(self):
        body = "\n".join([
            node(1, 52.520, 13.400, '<tag k="highway" v="traffic_signals"/>'),
            node(2, 52.520, 13.410),
            '<way id="20"><nd ref="1"/><nd ref="2"/><tag k="highway" v="residential"/></way>',
        ])
        signals = extract_traffic_signals(parse_osm(osm_doc(body)), ORIGIN, (5.0, 15.0), seed=1)
        assert len(signals) == 1
        assert signals[0].kind == "traffic_signal"
        assert 5.0 <= signals[0].height_m <= 15.0


def straight_road(length_m, road_id="r:0"):
    return RoadSegment(segment_id=road_id,
                       centerline=(Point2D(0, 0), Point2D(length_m, 0)),
                       junction_endpoints=(True, True), highway_class="residential")


class TestLampposts:
    def test_100m_road_six_posts(self):
        posts = generate_lampposts(straight_road(100.0), 25.0, 3.0, (5.0, 15.0), seed=3)
        assert len(posts) == 6
        xs = sorted({round(p.position.x, 6) for p in posts})
        assert xs == [25.0, 50.0, 75.0]
        assert {round(p.position.y, 6) for p in posts} == {-3.0, 3.0}

    def test_short_road_no_posts(self):
        assert generate_lampposts(straight_road(20.0), 25.0, 3.0, (5.0, 15.0), seed=3) == []

    def test_offset_and_pairing_on_curved_road(self):
        # Gentle arc; every post must sit lateral_offset from the centerline.
        pts = tuple(Point2D(50 * math.cos(a), 50 * math.sin(a))
                    for a in np.linspace(0, math.pi / 2, 40))
        road = RoadSegment("arc:0", pts, (True, True), "residential")
        posts = generate_lampposts(road, 10.0, 3.0, (5.0, 15.0), seed=3)
        assert posts
        for post in posts:
            d = min(point_segment_distance(post.position, a, b)
                    for a, b in zip(pts, pts[1:]))
            assert d == pytest.approx(3.0, abs=1e-6)

    def test_heights_seeded_in_range(self):
        posts = generate_lampposts(straight_road(200.0), 25.0, 3.0, (5.0, 15.0), seed=3)
        again = generate_lampposts(straight_road(200.0), 25.0, 3.0, (5.0, 15.0), seed=3)
        assert [p.height_m for p in posts] == [p.height_m for p in again]
        assert all(5.0 <= p.height_m <= 15.0 for p in posts)
        other_seed = generate_lampposts(straight_road(200.0), 25.0, 3.0, (5.0, 15.0), seed=4)
        assert [p.height_m for p in posts] != [p.height_m for p in other_seed]

    def test_footways_excluded_by_default(self):
        roads = [straight_road(100.0),
                 RoadSegment("f:0", (Point2D(0, 10), Point2D(100, 10)),
                             (False, False), "footway")]
        posts = generate_all_lampposts(roads, 25.0, 3.0, (5.0, 15.0), seed=3)
        assert all(p.position.y in (-3.0, 3.0) for p in posts)
