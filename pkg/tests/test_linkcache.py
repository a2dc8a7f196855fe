"""Link cache tests: bypass-recompute equality, persistence, invalidation,
partition independence, and batch-kernel equivalence."""

import numpy as np
import pytest

from v2xsim.errors import (
    CacheIntegrityError,
    CacheVersionError,
    StaleCacheError,
    UnknownEntityError,
)
from v2xsim.geometry import BuildingSolid, Point2D, Polygon
from v2xsim.linkcache import (
    CACHE_VERSION,
    CacheHeader,
    compute_pair,
    cull_radius_m,
    link_exists,
    load,
    precompute,
    save,
)
from v2xsim.radio import PlaneKind, RadioPlaneConfig, plane_pathloss
from v2xsim.sightlines import WallField, _wall_counts_python, wall_counts
from v2xsim.world import BBox, CandidateSite, SiteOrigin, TileGrid

RNG = np.random.default_rng(31337)


def square(x0, y0, side):
    return Polygon([(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)])


def femto_plane(**overrides):
    base = dict(
        plane=PlaneKind.FEMTOCELL, tx_power_dbm_range=(15.0, 25.0),
        tx_gain_dbi=22.6, rx_gain_dbi=22.6, carrier_freq_hz=60e9,
        bandwidth_hz=2.16e9, noise_figure_db=9.0, beamwidth_deg=15.0,
        pl_model_los="log_distance", pl_model_nlos="log_distance",
        pl_exponent_los=2.66, pl_exponent_nlos=7.17, bs_height_range_m=(5.0, 15.0),
        min_site_separation_m=100.0,
    )
    base.update(overrides)
    return RadioPlaneConfig(**base)


def macro_plane():
    return RadioPlaneConfig(
        plane=PlaneKind.MACROCELL, tx_power_dbm_range=(20.0, 43.0),
        tx_gain_dbi=18.0, rx_gain_dbi=0.0, carrier_freq_hz=2.6e9,
        bandwidth_hz=20e6, noise_figure_db=9.0, beamwidth_deg=120.0,
        pl_model_los="tr36873_uma_los", pl_model_nlos="cost_hata",
        bs_height_range_m=(15.0, 50.0))


def toy_scene(n_buildings=12, n_sites=9, extent=160.0, seed=5):
    rng = np.random.default_rng(seed)
    grid = TileGrid(BBox(0, 0, extent, extent), 8.0)
    solids = [BuildingSolid(square(float(rng.uniform(5, extent - 25)),
                                   float(rng.uniform(5, extent - 25)),
                                   float(rng.uniform(6, 18))),
                            height=float(rng.uniform(5, 30)), source_id=f"b{i}")
              for i in range(n_buildings)]
    sites = [CandidateSite(site_id=i, plane="femtocell",
                           position=Point2D(float(rng.uniform(0, extent)),
                                            float(rng.uniform(0, extent))),
                           height_m=float(rng.uniform(5, 12)), origin=SiteOrigin.LAMPPOST)
             for i in range(n_sites)]
    return grid, sites, solids


class TestPrecompute:
    def test_single_pair_no_buildings(self):
        grid = TileGrid(BBox(0, 0, 8, 8), 8.0)
        site = CandidateSite(0, "femtocell", Point2D(1.0, 1.0), 8.0, SiteOrigin.LAMPPOST)
        plane = femto_plane()
        table = precompute(grid, [site], [], plane)
        assert len(table) == 1
        rec = table.query(0, 0)
        assert rec.los.wall_count == 0
        assert rec.pathloss_db == plane_pathloss(plane, rec.distance_m, True, 8.0, 1.5)

    def test_out_of_range_site_culled(self):
        grid = TileGrid(BBox(0, 0, 8, 8), 8.0)
        # One wall in the way puts the 96 m pair far beyond the NLOS range.
        plane = femto_plane()
        solids = [BuildingSolid(square(50.0, 0.0, 8.0), height=50.0)]
        far = CandidateSite(0, "femtocell", Point2D(100.0, 4.0), 8.0, SiteOrigin.LAMPPOST)
        table = precompute(grid, [far], solids, plane)
        assert table.query(0, 0) is None

    def test_records_match_bypass_recompute(self):
        grid, sites, solids = toy_scene()
        plane = femto_plane()
        table = precompute(grid, sites, solids, plane)
        assert len(table) > 0
        for tile_id in range(grid.n_tiles):
            for site in sites:
                fresh = compute_pair(grid, tile_id, site, solids, plane)
                cached = table.query(tile_id, site.site_id)
                assert (fresh is None) == (cached is None)
                if fresh is not None:
                    assert cached.distance_m == fresh.distance_m
                    assert cached.pathloss_db == fresh.pathloss_db
                    assert cached.los == fresh.los

    def test_macro_plane_bypass_equality(self):
        grid, sites, solids = toy_scene(n_sites=4)
        plane = macro_plane()
        macro_sites = [CandidateSite(s.site_id, "macrocell", s.position, 25.0,
                                     SiteOrigin.ROOFTOP_INCENTER) for s in sites]
        table = precompute(grid, macro_sites, solids, plane)
        assert len(table) == grid.n_tiles * len(macro_sites)  # nothing culled at city scale
        for _ in range(200):
            tile_id = int(RNG.integers(grid.n_tiles))
            site = macro_sites[int(RNG.integers(len(macro_sites)))]
            fresh = compute_pair(grid, tile_id, site, solids, plane)
            cached = table.query(tile_id, site.site_id)
            assert cached == fresh

    def test_partition_independence(self):
        grid, sites, solids = toy_scene()
        plane = femto_plane()
        one = precompute(grid, sites, solids, plane, workers=1)
        four = precompute(grid, sites, solids, plane, workers=4)
        assert np.array_equal(one.records, four.records)

    def test_monotone_cull(self):
        grid, sites, solids = toy_scene()
        plane = femto_plane()
        small = precompute(grid, sites, solids, plane, cull_margin_db=5.0)
        big = precompute(grid, sites, solids, plane, cull_margin_db=15.0)
        assert len(big) >= len(small)
        small_keys = set(zip(small.records["tile_id"].tolist(),
                             small.records["site_id"].tolist()))
        big_keys = set(zip(big.records["tile_id"].tolist(),
                           big.records["site_id"].tolist()))
        assert small_keys <= big_keys

    def test_records_sorted_by_tile_then_site(self):
        grid, sites, solids = toy_scene()
        table = precompute(grid, sites, solids, femto_plane())
        keys = list(zip(table.records["tile_id"].tolist(),
                        table.records["site_id"].tolist()))
        assert keys == sorted(keys)

    def test_cull_radius_bisection(self):
        plane = femto_plane()
        for is_los in (True, False):
            r = cull_radius_m(plane, is_los, 8.0, 1.5, cull_margin_db=10.0)
            assert plane_pathloss(plane, r, is_los, 8.0, 1.5) <= \
                plane_pathloss(plane, r, is_los, 8.0, 1.5)
            assert link_exists(plane, plane_pathloss(plane, r * 0.999, is_los, 8.0, 1.5), 10.0)
            assert not link_exists(plane, plane_pathloss(plane, r * 1.01, is_los, 8.0, 1.5), 10.0)


class TestQuery:
    def test_queries_match_linear_scan(self):
        grid, sites, solids = toy_scene()
        table = precompute(grid, sites, solids, femto_plane())
        records = table.records
        for _ in range(2000):
            tile_id = int(RNG.integers(grid.n_tiles))
            site_id = int(RNG.integers(len(sites)))
            hit = None
            for row in records[(records["tile_id"] == tile_id)
                               & (records["site_id"] == site_id)]:
                hit = row
            got = table.query(tile_id, site_id)
            if hit is None:
                assert got is None
            else:
                assert got.distance_m == hit["distance_m"]
                assert got.pathloss_db == hit["pathloss_db"]

    def test_unknown_ids_rejected(self):
        grid, sites, solids = toy_scene()
        table = precompute(grid, sites, solids, femto_plane())
        with pytest.raises(UnknownEntityError):
            table.query(grid.n_tiles, 0)
        with pytest.raises(UnknownEntityError):
            table.query(0, len(sites))


class TestPersistence:
    def _header(self, table, tile_size=8.0):
        return CacheHeader(CACHE_VERSION, b"m" * 32, b"g" * 32, b"p" * 32,
                           tile_size, len(table))

    def test_round_trip_bit_exact(self, tmp_path):
        grid, sites, solids = toy_scene()
        table = precompute(grid, sites, solids, femto_plane())
        path = tmp_path / "links.bin"
        written = save(table, self._header(table), path)
        assert written == path.stat().st_size
        header, loaded = load(path, grid.n_tiles, len(sites),
                              expected_map_digest=b"m" * 32)
        assert header.record_count == len(table)
        assert loaded.records.tobytes() == table.records.tobytes()

    def test_stale_digest_names_field(self, tmp_path):
        grid, sites, solids = toy_scene()
        table = precompute(grid, sites, solids, femto_plane())
        path = tmp_path / "links.bin"
        save(table, self._header(table), path)
        with pytest.raises(StaleCacheError) as err:
            load(path, grid.n_tiles, len(sites), expected_map_digest=b"x" * 32)
        assert err.value.field == "map_digest"
        with pytest.raises(StaleCacheError) as err:
            load(path, grid.n_tiles, len(sites), expected_geometry_digest=b"x" * 32)
        assert err.value.field == "geometry_config_digest"

    def test_corrupt_byte_detected(self, tmp_path):
        grid, sites, solids = toy_scene()
        table = precompute(grid, sites, solids, femto_plane())
        path = tmp_path / "links.bin"
        save(table, self._header(table), path)
        raw = bytearray(path.read_bytes())
        raw[200] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CacheIntegrityError):
            load(path, grid.n_tiles, len(sites))

    def test_truncation_detected(self, tmp_path):
        grid, sites, solids = toy_scene()
        table = precompute(grid, sites, solids, femto_plane())
        path = tmp_path / "links.bin"
        save(table, self._header(table), path)
        path.write_bytes(path.read_bytes()[:-40])
        with pytest.raises(CacheIntegrityError):
            load(path, grid.n_tiles, len(sites))

    def test_version_mismatch_detected(self, tmp_path):
        grid, sites, solids = toy_scene()
        table = precompute(grid, sites, solids, femto_plane())
        path = tmp_path / "links.bin"
        import hashlib
        bad_header = CacheHeader(99, b"m" * 32, b"g" * 32, b"p" * 32, 8.0, len(table))
        body = bad_header.pack() + table.records.tobytes()
        path.write_bytes(body + hashlib.sha256(body).digest())
        with pytest.raises(CacheVersionError):
            load(path, grid.n_tiles, len(sites))


class TestKernelEquivalence:
    def test_batch_matches_python_reference(self):
        rng = np.random.default_rng(77)
        solids = [BuildingSolid(square(float(rng.uniform(0, 90)),
                                       float(rng.uniform(0, 90)),
                                       float(rng.uniform(3, 20))),
                                height=float(rng.uniform(4, 35)))
                  for _ in range(15)]
        field = WallField.from_solids(solids, cell_size=10.0)
        tx = rng.uniform(-10, 110, size=500)
        ty = rng.uniform(-10, 110, size=500)
        need_full = np.ones(500, dtype=bool)
        for _ in range(5):
            sx, sy = rng.uniform(-5, 105, size=2)
            sh = float(rng.uniform(4, 12))
            fast = wall_counts(field, float(sx), float(sy), sh, tx, ty, 1.5, need_full)
            slow = np.zeros(500, dtype=np.int32)
            _wall_counts_python(field.ax, field.ay, field.bx, field.by, field.height,
                                float(sx), float(sy), sh, tx, ty, 1.5, need_full, slow)
            assert np.array_equal(fast, slow)

    def test_batch_matches_los_classify(self):
        from v2xsim.geometry import los_classify

        rng = np.random.default_rng(78)
        solids = [BuildingSolid(square(float(rng.uniform(0, 90)),
                                       float(rng.uniform(0, 90)),
                                       float(rng.uniform(3, 20))),
                                height=float(rng.uniform(4, 35)))
                  for _ in range(15)]
        field = WallField.from_solids(solids, cell_size=10.0)
        tx = rng.uniform(-10, 110, size=300)
        ty = rng.uniform(-10, 110, size=300)
        sx, sy, sh = 50.0, 50.0, 9.0
        counts = wall_counts(field, sx, sy, sh, tx, ty, 1.5)
        for k in range(300):
            expected = los_classify(Point2D(sx, sy), sh,
                                    Point2D(float(tx[k]), float(ty[k])), 1.5, solids)
            assert counts[k] == expected.wall_count

    def test_grid_aligned_scene_agrees(self):
        # Axis-aligned walls and axis-aligned rays exercise the degenerate
        # tie-break rules; batch and per-pair paths must still agree.
        from v2xsim.geometry import los_classify

        solids = [BuildingSolid(square(10.0 * i, 10.0, 6.0), height=12.0)
                  for i in range(1, 8)]
        field = WallField.from_solids(solids, cell_size=8.0)
        tx = np.array([float(x) for x in range(0, 80, 4)] * 3)
        ty = np.array([10.0] * 20 + [13.0] * 20 + [16.0] * 20)
        counts = wall_counts(field, 0.0, 13.0, 7.0, tx, ty, 1.5)
        for k in range(len(tx)):
            p1, p2 = Point2D(0.0, 13.0), Point2D(float(tx[k]), float(ty[k]))
            if p1 == p2:
                assert counts[k] == 0
                continue
            expected = los_classify(p1, 7.0, p2, 1.5, solids)
            assert counts[k] == expected.wall_count


class TestWorkerEnv:
    def test_worker_count_env_var(self, monkeypatch):
        grid, sites, solids = toy_scene()
        plane = femto_plane()
        monkeypatch.setenv("V2XSIM_WORKERS", "3")
        enved = precompute(grid, sites, solids, plane)
        monkeypatch.delenv("V2XSIM_WORKERS")
        plain = precompute(grid, sites, solids, plane)
        assert np.array_equal(enved.records, plain.records)
