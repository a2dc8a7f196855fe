"""Pre-computed tile/site link table with versioned binary persistence.

Every potential tile-to-site link within the cull range is evaluated once
(3D distance, LOS class by blocking-wall count, deterministic pathloss for
the plane's model) and recalled in O(1)-amortized time during scenario
execution. The file format is fixed-layout little-endian with input
digests in the header and a whole-file checksum, so stale or corrupt
caches are rejected on load.

File layout:
  header:  magic "DRVC", u32 version, 32-byte map digest, 32-byte geometry
           config digest, 32-byte plane config digest, f64 tile size,
           u64 record count
  records: u32 tile_id, u32 site_id, f64 distance, u8 los_kind,
           u16 wall_count, f64 pathloss            (27 bytes each)
  trailer: 32-byte SHA-256 of header + records
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CacheIntegrityError,
    CacheVersionError,
    ConfigError,
    StaleCacheError,
    UnknownEntityError,
)
from .geometry import BuildingSolid, LosClass, LosKind, distance_3d, los_classify
from .radio import RadioPlaneConfig, plane_pathloss
from .sightlines import WallField, wall_counts
from .world import CandidateSite, TileGrid

CACHE_MAGIC = b"DRVC"
CACHE_VERSION = 1
_HEADER_STRUCT = struct.Struct("<4sI32s32s32sdQ")
_CHECKSUM_BYTES = 32

RECORD_DTYPE = np.dtype([
    ("tile_id", "<u4"),
    ("site_id", "<u4"),
    ("distance_m", "<f8"),
    ("los_kind", "u1"),
    ("wall_count", "<u2"),
    ("pathloss_db", "<f8"),
])

DEFAULT_USER_HEIGHT_M = 1.5
DEFAULT_CULL_MARGIN_DB = 10.0

_LOS_CODE = {LosKind.LOS: 0, LosKind.NLOS: 1}
_CODE_LOS = {0: LosKind.LOS, 1: LosKind.NLOS}


@dataclass(frozen=True)
class CacheHeader:
    format_version: int
    map_digest: bytes
    geometry_config_digest: bytes
    plane_config_digest: bytes
    tile_size_m: float
    record_count: int

    def pack(self) -> bytes:
        return _HEADER_STRUCT.pack(CACHE_MAGIC, self.format_version, self.map_digest,
                                   self.geometry_config_digest, self.plane_config_digest,
                                   self.tile_size_m, self.record_count)


@dataclass(frozen=True)
class LinkRecord:
    tile_id: int
    site_id: int
    distance_m: float
    los: LosClass
    pathloss_db: float


class LinkTable:
    """Immutable in-memory view of the pre-computed records.

    Records are sorted by (tile_id, site_id). Lookups go through a per-site
    slice of a secondary (site, tile) ordering; the table is safe for
    concurrent readers.
    """

    def __init__(self, records: np.ndarray, n_tiles: int, n_sites: int):
        if records.dtype != RECORD_DTYPE:
            raise CacheIntegrityError("record array has wrong dtype")
        self.records = records
        self.n_tiles = int(n_tiles)
        self.n_sites = int(n_sites)
        order = np.lexsort((records["tile_id"], records["site_id"]))
        self._by_site = records[order]
        self._site_bounds = np.searchsorted(self._by_site["site_id"], np.arange(n_sites + 1))

    def __len__(self) -> int:
        return int(self.records.shape[0])

    def query(self, tile_id: int, site_id: int) -> LinkRecord | None:
        """The stored record for a pair, or None when the pair was culled."""
        if not (0 <= tile_id < self.n_tiles):
            raise UnknownEntityError(f"tile id {tile_id} out of range [0, {self.n_tiles})")
        if not (0 <= site_id < self.n_sites):
            raise UnknownEntityError(f"site id {site_id} out of range [0, {self.n_sites})")
        lo, hi = self._site_bounds[site_id], self._site_bounds[site_id + 1]
        tiles = self._by_site["tile_id"][lo:hi]
        pos = int(np.searchsorted(tiles, tile_id))
        if pos >= tiles.shape[0] or tiles[pos] != tile_id:
            return None
        row = self._by_site[lo + pos]
        return _row_to_record(row)

    def site_rows(self, site_id: int) -> np.ndarray:
        if not (0 <= site_id < self.n_sites):
            raise UnknownEntityError(f"site id {site_id} out of range [0, {self.n_sites})")
        lo, hi = self._site_bounds[site_id], self._site_bounds[site_id + 1]
        return self._by_site[lo:hi]

    def site_pathloss_dense(self, site_id: int) -> np.ndarray:
        """Per-tile pathloss for one site, NaN where the pair was culled."""
        rows = self.site_rows(site_id)
        dense = np.full(self.n_tiles, np.nan, dtype=np.float64)
        dense[rows["tile_id"]] = rows["pathloss_db"]
        return dense

    def coverage_matrix(self, site_ids: Sequence[int]) -> np.ndarray:
        """Boolean [len(site_ids), n_tiles]: True where a cached link exists."""
        out = np.zeros((len(site_ids), self.n_tiles), dtype=bool)
        for i, site_id in enumerate(site_ids):
            rows = self.site_rows(site_id)
            out[i, rows["tile_id"]] = True
        return out


def _row_to_record(row) -> LinkRecord:
    return LinkRecord(
        tile_id=int(row["tile_id"]),
        site_id=int(row["site_id"]),
        distance_m=float(row["distance_m"]),
        los=LosClass(kind=_CODE_LOS[int(row["los_kind"])], wall_count=int(row["wall_count"])),
        pathloss_db=float(row["pathloss_db"]),
    )


# --------------------------------------------------------------------------
# Pre-computation
# --------------------------------------------------------------------------

def max_pathloss_allowed_db(plane: RadioPlaneConfig, cull_margin_db: float) -> float:
    """Largest pathloss that can still clear the cull threshold at max TX."""
    tx_max = plane.tx_power_dbm_range[1]
    rssi_floor = plane.noise_floor_dbm() + plane.snr_cutoff_db - cull_margin_db
    return tx_max + plane.tx_gain_dbi + plane.rx_gain_dbi - rssi_floor


def cull_radius_m(plane: RadioPlaneConfig, is_los: bool, h_bs_m: float, h_ut_m: float,
                  cull_margin_db: float, d_cap_m: float = 1e7) -> float:
    """Largest 3D distance whose deterministic pathloss clears the cull
    threshold, found by bisection (pathloss is monotone in distance)."""
    allowed = max_pathloss_allowed_db(plane, cull_margin_db)
    d_min = max(abs(h_bs_m - h_ut_m), 1.0)

    def pl(d: float) -> float:
        return plane_pathloss(plane, d, is_los, h_bs_m, h_ut_m)

    if pl(d_min) > allowed:
        return 0.0
    lo, hi = d_min, d_min * 2.0
    while hi < d_cap_m and pl(hi) <= allowed:
        lo, hi = hi, hi * 2.0
    if hi >= d_cap_m:
        return d_cap_m
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if pl(mid) <= allowed:
            lo = mid
        else:
            hi = mid
    return lo


def link_exists(plane: RadioPlaneConfig, pathloss_db: float, cull_margin_db: float) -> bool:
    """Exact cull predicate shared by precompute and bypass recomputation."""
    return pathloss_db <= max_pathloss_allowed_db(plane, cull_margin_db)


def compute_pair(grid: TileGrid, tile_id: int, site: CandidateSite,
                 solids: Sequence[BuildingSolid], plane: RadioPlaneConfig,
                 user_height_m: float = DEFAULT_USER_HEIGHT_M,
                 cull_margin_db: float = DEFAULT_CULL_MARGIN_DB) -> LinkRecord | None:
    """Single-pair recomputation through the public geometry/radio ops.

    This is the cache-bypass route: for every stored record it reproduces
    the identical values, and for culled pairs it returns None.
    """
    tile_pt = grid.incenter(tile_id)
    if tile_pt == site.position:
        los = LosClass.from_wall_count(0)
    else:
        los = los_classify(tile_pt, user_height_m, site.position, site.height_m, solids)
    dist = distance_3d(tile_pt, user_height_m, site.position, site.height_m)
    pl = plane_pathloss(plane, dist, los.kind is LosKind.LOS, site.height_m, user_height_m)
    if not link_exists(plane, pl, cull_margin_db):
        return None
    return LinkRecord(tile_id=tile_id, site_id=site.site_id, distance_m=dist,
                      los=los, pathloss_db=pl)


def _precompute_chunk(grid: TileGrid, tile_ids: np.ndarray, sites: Sequence[CandidateSite],
                      field: WallField, plane: RadioPlaneConfig, user_height_m: float,
                      cull_margin_db: float, radii: dict[int, tuple[float, float]],
                      ) -> list[tuple[int, int, float, int, int, float]]:
    tx, ty = grid.incenters()
    tx = tx[tile_ids]
    ty = ty[tile_ids]
    rows: list[tuple[int, int, float, int, int, float]] = []
    for site in sites:
        r_los, r_nlos = radii[site.site_id]
        r_max = max(r_los, r_nlos)
        dz = site.height_m - user_height_m
        d3 = np.sqrt((tx - site.position.x) ** 2 + (ty - site.position.y) ** 2 + dz * dz)
        candidates = np.nonzero(d3 <= r_max + 1e-3)[0]
        if candidates.shape[0] == 0:
            continue
        need_full = d3[candidates] <= r_nlos + 1e-3
        counts = wall_counts(field, site.position.x, site.position.y, site.height_m,
                             tx[candidates], ty[candidates], user_height_m,
                             need_full=need_full)
        # Pairs beyond their class radius cannot clear the exact cull test
        # (pathloss is monotone in distance), so skip the scalar evaluation.
        d3c = d3[candidates]
        plausible = np.where(counts == 0, d3c <= r_los + 1e-3, d3c <= r_nlos + 1e-3)
        for j, count in zip(candidates[plausible], counts[plausible]):
            tile_id = int(tile_ids[j])
            tile_pt = grid.incenter(tile_id)
            dist = distance_3d(tile_pt, user_height_m, site.position, site.height_m)
            is_los = count == 0
            pl = plane_pathloss(plane, dist, is_los, site.height_m, user_height_m)
            if not link_exists(plane, pl, cull_margin_db):
                continue
            rows.append((tile_id, site.site_id, dist,
                         0 if is_los else 1, int(count), pl))
    return rows


def precompute(grid: TileGrid, sites: Sequence[CandidateSite],
               solids: Sequence[BuildingSolid], plane: RadioPlaneConfig,
               user_height_m: float = DEFAULT_USER_HEIGHT_M,
               cull_margin_db: float = DEFAULT_CULL_MARGIN_DB,
               workers: int | None = None,
               wall_field: WallField | None = None) -> LinkTable:
    """Evaluate every in-range tile/site pair for one plane.

    The work is partitioned over tiles; results are independent of the
    partitioning and of the worker count, and come back sorted by
    (tile_id, site_id).
    """
    if grid.n_tiles == 0 or not sites:
        raise ConfigError("precompute needs at least one tile and one site")
    site_list = sorted(sites, key=lambda s: s.site_id)
    if [s.site_id for s in site_list] != list(range(len(site_list))):
        raise ConfigError("site ids must be dense 0..n-1")
    field = wall_field if wall_field is not None else WallField.from_solids(solids)
    radii = {
        s.site_id: (
            cull_radius_m(plane, True, s.height_m, user_height_m, cull_margin_db),
            cull_radius_m(plane, False, s.height_m, user_height_m, cull_margin_db),
        )
        for s in site_list
    }
    if workers is None:
        workers = int(os.environ.get("V2XSIM_WORKERS", "1"))
    workers = max(1, workers)
    all_tiles = np.arange(grid.n_tiles, dtype=np.int64)
    if workers == 1:
        chunks = [all_tiles]
    else:
        chunks = np.array_split(all_tiles, workers * 4)
    if len(chunks) == 1:
        results = [_precompute_chunk(grid, chunks[0], site_list, field, plane,
                                     user_height_m, cull_margin_db, radii)]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda chunk: _precompute_chunk(grid, chunk, site_list, field, plane,
                                                user_height_m, cull_margin_db, radii),
                chunks))
    rows = [row for chunk_rows in results for row in chunk_rows]
    records = np.array(rows, dtype=RECORD_DTYPE) if rows else np.empty(0, dtype=RECORD_DTYPE)
    order = np.lexsort((records["site_id"], records["tile_id"]))
    records = np.ascontiguousarray(records[order])
    return LinkTable(records, n_tiles=grid.n_tiles, n_sites=len(site_list))


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------

def save(table: LinkTable, header: CacheHeader, path: str | Path) -> int:
    """Write the cache file; returns bytes written."""
    if header.record_count != len(table):
        header = CacheHeader(header.format_version, header.map_digest,
                             header.geometry_config_digest, header.plane_config_digest,
                             header.tile_size_m, len(table))
    body = header.pack() + table.records.tobytes()
    checksum = hashlib.sha256(body).digest()
    payload = body + checksum
    Path(path).write_bytes(payload)
    return len(payload)


def read_header(path: str | Path) -> CacheHeader:
    raw = Path(path).read_bytes()
    return _parse_and_verify(raw)[0]


def _parse_and_verify(raw: bytes) -> tuple[CacheHeader, np.ndarray]:
    if len(raw) < _HEADER_STRUCT.size + _CHECKSUM_BYTES:
        raise CacheIntegrityError("cache file truncated (shorter than header)")
    magic, version, d_map, d_geo, d_plane, tile_size, count = _HEADER_STRUCT.unpack(
        raw[:_HEADER_STRUCT.size])
    if magic != CACHE_MAGIC:
        raise CacheIntegrityError(f"bad magic {magic!r}")
    if version != CACHE_VERSION:
        raise CacheVersionError(f"cache format version {version}, expected {CACHE_VERSION}")
    expected_len = _HEADER_STRUCT.size + count * RECORD_DTYPE.itemsize + _CHECKSUM_BYTES
    if len(raw) != expected_len:
        raise CacheIntegrityError(
            f"cache length {len(raw)} does not match record count {count}")
    body, checksum = raw[:-_CHECKSUM_BYTES], raw[-_CHECKSUM_BYTES:]
    if hashlib.sha256(body).digest() != checksum:
        raise CacheIntegrityError("cache checksum mismatch")
    header = CacheHeader(version, d_map, d_geo, d_plane, tile_size, count)
    records = np.frombuffer(raw, dtype=RECORD_DTYPE, count=count,
                            offset=_HEADER_STRUCT.size).copy()
    return header, records


def load(path: str | Path, n_tiles: int, n_sites: int,
         expected_map_digest: bytes | None = None,
         expected_geometry_digest: bytes | None = None,
         expected_plane_digest: bytes | None = None) -> tuple[CacheHeader, LinkTable]:
    """Load and verify a cache file.

    Digest arguments, when given, must match the header exactly; a
    mismatch raises StaleCacheError naming the offending digest.
    """
    raw = Path(path).read_bytes()
    header, records = _parse_and_verify(raw)
    for name, expected, found in (
        ("map_digest", expected_map_digest, header.map_digest),
        ("geometry_config_digest", expected_geometry_digest, header.geometry_config_digest),
        ("plane_config_digest", expected_plane_digest, header.plane_config_digest),
    ):
        if expected is not None and expected != found:
            raise StaleCacheError(name, expected.hex(), found.hex())
    return header, LinkTable(records, n_tiles=n_tiles, n_sites=n_sites)
