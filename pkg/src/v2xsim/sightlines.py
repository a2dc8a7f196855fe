"""Batch 2.5D sight-line evaluation against a wall field.

Link pre-computation needs millions of wall-count queries, so the walls of
all building blocks are flattened into arrays, indexed by a uniform grid,
and each site-to-tile ray walks only the grid cells it passes through.
The crossing decision is arithmetically identical to
:func:`v2xsim.geometry.los_classify` (same expressions, same operation
order, same canonical endpoint ordering), so batch and per-pair results
agree exactly.

A numba-compiled kernel is used when available; set ``V2XSIM_NO_NUMBA=1``
to force the pure-Python path (identical results, much slower).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BuildingSolid

_GRID_CELL_M = 25.0


@dataclass(frozen=True)
class WallField:
    """Flattened wall segments plus a dilated uniform grid index."""

    ax: np.ndarray
    ay: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    height: np.ndarray
    grid_minx: float
    grid_miny: float
    grid_cell: float
    grid_nx: int
    grid_ny: int
    cell_start: np.ndarray   # int64[nx*ny + 1]
    cell_walls: np.ndarray   # int32, CSR payload

    @property
    def n_walls(self) -> int:
        return int(self.ax.shape[0])

    @classmethod
    def from_solids(cls, solids: Sequence[BuildingSolid],
                    cell_size: float = _GRID_CELL_M) -> "WallField":
        ax, ay, bx, by, hh = [], [], [], [], []
        for solid in solids:
            pts = solid.footprint.points
            n = pts.shape[0]
            for i in range(n):
                j = (i + 1) % n
                ax.append(pts[i, 0])
                ay.append(pts[i, 1])
                bx.append(pts[j, 0])
                by.append(pts[j, 1])
                hh.append(solid.height)
        ax = np.asarray(ax, dtype=np.float64)
        ay = np.asarray(ay, dtype=np.float64)
        bx = np.asarray(bx, dtype=np.float64)
        by = np.asarray(by, dtype=np.float64)
        hh = np.asarray(hh, dtype=np.float64)
        if ax.shape[0] == 0:
            return cls(ax, ay, bx, by, hh, 0.0, 0.0, cell_size, 1, 1,
                       np.zeros(2, dtype=np.int64), np.zeros(0, dtype=np.int32))
        minx = float(min(ax.min(), bx.min())) - cell_size
        miny = float(min(ay.min(), by.min())) - cell_size
        maxx = float(max(ax.max(), bx.max())) + cell_size
        maxy = float(max(ay.max(), by.max())) + cell_size
        nx = max(1, int(math.ceil((maxx - minx) / cell_size)))
        ny = max(1, int(math.ceil((maxy - miny) / cell_size)))

        # Register each wall in its bbox cells dilated by one, so rays that
        # graze cell corners can never miss a wall.
        buckets: list[list[int]] = [[] for _ in range(nx * ny)]
        for w in range(ax.shape[0]):
            cx0 = int((min(ax[w], bx[w]) - minx) / cell_size) - 1
            cx1 = int((max(ax[w], bx[w]) - minx) / cell_size) + 1
            cy0 = int((min(ay[w], by[w]) - miny) / cell_size) - 1
            cy1 = int((max(ay[w], by[w]) - miny) / cell_size) + 1
            for cy in range(max(cy0, 0), min(cy1, ny - 1) + 1):
                for cx in range(max(cx0, 0), min(cx1, nx - 1) + 1):
                    buckets[cy * nx + cx].append(w)
        cell_start = np.zeros(nx * ny + 1, dtype=np.int64)
        for idx, bucket in enumerate(buckets):
            cell_start[idx + 1] = cell_start[idx] + len(bucket)
        cell_walls = np.zeros(int(cell_start[-1]), dtype=np.int32)
        for idx, bucket in enumerate(buckets):
            cell_walls[cell_start[idx]:cell_start[idx + 1]] = bucket
        return cls(ax, ay, bx, by, hh, minx, miny, cell_size, nx, ny,
                   cell_start, cell_walls)


def _wall_counts_python(ax, ay, bx, by, wh,
                        sx, sy, sh, tx, ty, th, need_full, out):
    """Reference implementation: test every wall for every ray."""
    n_walls = ax.shape[0]
    for k in range(tx.shape[0]):
        px, py, hp = sx, sy, sh
        qx, qy, hq = float(tx[k]), float(ty[k]), th
        if qx < px or (qx == px and qy < py):
            px, py, hp, qx, qy, hq = qx, qy, hq, px, py, hp
        count = 0
        for w in range(n_walls):
            wax, way, wbx, wby = ax[w], ay[w], bx[w], by[w]
            d1 = (qx - px) * (way - py) - (qy - py) * (wax - px)
            d2 = (qx - px) * (wby - py) - (qy - py) * (wbx - px)
            if (d1 >= 0.0) == (d2 >= 0.0):
                continue
            d3 = (wbx - wax) * (py - way) - (wby - way) * (px - wax)
            d4 = (wbx - wax) * (qy - way) - (wby - way) * (qx - wax)
            if (d3 >= 0.0) == (d4 >= 0.0):
                continue
            t = d3 / (d3 - d4)
            if hp + t * (hq - hp) < wh[w]:
                count += 1
                if not need_full[k]:
                    break
        out[k] = count
    return out


def _make_kernel():
    from numba import njit

    @njit(cache=True, nogil=True)
    def kernel(ax, ay, bx, by, wh, cell_start, cell_walls,
               gminx, gminy, gcell, gnx, gny,
               sx, sy, sh, tx, ty, th, need_full, out):
        n_walls = ax.shape[0]
        stamps = np.full(n_walls, -1, dtype=np.int64)
        gmaxx = gminx + gnx * gcell
        gmaxy = gminy + gny * gcell
        for k in range(tx.shape[0]):
            px, py, hp = sx, sy, sh
            qx, qy, hq = tx[k], ty[k], th
            if qx < px or (qx == px and qy < py):
                tmpx = px; tmpy = py; tmph = hp
                px = qx; py = qy; hp = hq
                qx = tmpx; qy = tmpy; hq = tmph
            dx = qx - px
            dy = qy - py
            # Clip the ray's parameter range to the grid extents.
            t0 = 0.0
            t1 = 1.0
            ok = True
            if dx == 0.0:
                if px < gminx or px > gmaxx:
                    ok = False
            else:
                ta = (gminx - px) / dx
                tb = (gmaxx - px) / dx
                if ta > tb:
                    ta, tb = tb, ta
                t0 = max(t0, ta)
                t1 = min(t1, tb)
            if ok and dy == 0.0:
                if py < gminy or py > gmaxy:
                    ok = False
            elif ok:
                ta = (gminy - py) / dy
                tb = (gmaxy - py) / dy
                if ta > tb:
                    ta, tb = tb, ta
                t0 = max(t0, ta)
                t1 = min(t1, tb)
            if not ok or t0 > t1:
                out[k] = 0
                continue
            x0 = px + t0 * dx
            y0 = py + t0 * dy
            x1 = px + t1 * dx
            y1 = py + t1 * dy
            ix = int((x0 - gminx) / gcell)
            iy = int((y0 - gminy) / gcell)
            ix = min(max(ix, 0), gnx - 1)
            iy = min(max(iy, 0), gny - 1)
            ix_end = int((x1 - gminx) / gcell)
            iy_end = int((y1 - gminy) / gcell)
            ix_end = min(max(ix_end, 0), gnx - 1)
            iy_end = min(max(iy_end, 0), gny - 1)
            step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
            step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
            if dx != 0.0:
                nxt = gminx + (ix + (1 if step_x > 0 else 0)) * gcell
                t_max_x = (nxt - px) / dx
                t_delta_x = gcell / abs(dx)
            else:
                t_max_x = math.inf
                t_delta_x = math.inf
            if dy != 0.0:
                nxt = gminy + (iy + (1 if step_y > 0 else 0)) * gcell
                t_max_y = (nxt - py) / dy
                t_delta_y = gcell / abs(dy)
            else:
                t_max_y = math.inf
                t_delta_y = math.inf
            count = 0
            stamp = k
            done = False
            while True:
                cell = iy * gnx + ix
                for ptr in range(cell_start[cell], cell_start[cell + 1]):
                    w = cell_walls[ptr]
                    if stamps[w] == stamp:
                        continue
                    stamps[w] = stamp
                    wax = ax[w]; way = ay[w]; wbx = bx[w]; wby = by[w]
                    d1 = (qx - px) * (way - py) - (qy - py) * (wax - px)
                    d2 = (qx - px) * (wby - py) - (qy - py) * (wbx - px)
                    if (d1 >= 0.0) == (d2 >= 0.0):
                        continue
                    d3 = (wbx - wax) * (py - way) - (wby - way) * (px - wax)
                    d4 = (wbx - wax) * (qy - way) - (wby - way) * (qx - wax)
                    if (d3 >= 0.0) == (d4 >= 0.0):
                        continue
                    t = d3 / (d3 - d4)
                    if hp + t * (hq - hp) < wh[w]:
                        count += 1
                        if not need_full[k]:
                            done = True
                            break
                if done or (ix == ix_end and iy == iy_end):
                    break
                if t_max_x <= t_max_y:
                    if t_max_x > t1 and t_max_y > t1:
                        break
                    ix += step_x
                    t_max_x += t_delta_x
                    if ix < 0 or ix >= gnx:
                        break
                else:
                    if t_max_y > t1:
                        break
                    iy += step_y
                    t_max_y += t_delta_y
                    if iy < 0 or iy >= gny:
                        break
            out[k] = count
        return out

    return kernel


_KERNEL = None
if os.environ.get("V2XSIM_NO_NUMBA", "") != "1":
    try:
        _KERNEL = _make_kernel()
    except ImportError:  # pragma: no cover - numba is a hard dependency
        _KERNEL = None


def wall_counts(field: WallField, site_x: float, site_y: float, site_h: float,
                tiles_x: np.ndarray, tiles_y: np.ndarray, user_h: float,
                need_full: np.ndarray | None = None) -> np.ndarray:
    """Blocking-wall counts from one site to many tile centers.

    ``need_full[k]`` False allows early exit at the first blocking wall
    (the pair is then reported with count >= 1 but not exact); callers use
    it for pairs whose NLOS link would be culled anyway.
    """
    tiles_x = np.ascontiguousarray(tiles_x, dtype=np.float64)
    tiles_y = np.ascontiguousarray(tiles_y, dtype=np.float64)
    n = tiles_x.shape[0]
    if need_full is None:
        need_full = np.ones(n, dtype=np.bool_)
    need_full = np.ascontiguousarray(need_full, dtype=np.bool_)
    out = np.zeros(n, dtype=np.int32)
    if field.n_walls == 0 or n == 0:
        return out
    if _KERNEL is not None:
        return _KERNEL(field.ax, field.ay, field.bx, field.by, field.height,
                       field.cell_start, field.cell_walls,
                       field.grid_minx, field.grid_miny, field.grid_cell,
                       field.grid_nx, field.grid_ny,
                       float(site_x), float(site_y), float(site_h),
                       tiles_x, tiles_y, float(user_h), need_full, out)
    return _wall_counts_python(field.ax, field.ay, field.bx, field.by, field.height,
                               float(site_x), float(site_y), float(site_h),
                               tiles_x, tiles_y, float(user_h), need_full, out)
