"""Run artifacts: manifest, per-step store, and plot-ready CSV emission.

Every file written here is a deterministic byte stream for fixed inputs:
JSON is dumped with sorted keys, the snapshot archive pins its zip entry
timestamps, and CSV rows are emitted in a fixed order. Wall-clock timings
live in a separate ``timings.json`` so the rest of an output tree can be
compared byte-for-byte across runs.

``timings.json`` is the single exception to determinism and is excluded
from reproducibility comparisons.
"""

from __future__ import annotations

import io
import json
import time
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import (
    ScenarioConfig,
    geometry_config_digest,
    plane_config_digest,
    resolved_config_dict,
)
from .engine import Engine, RunSummary, Snapshot, run_scenario
from .errors import TraceDataError

TIMINGS_FILENAME = "timings.json"
SNAPSHOT_ARCHIVE = "snapshots.zip"
MANIFEST_FILENAME = "manifest.json"
STEPS_FILENAME = "steps.csv"
FINAL_FILENAME = "final.json"

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


class SnapshotStore:
    """Deterministic zip archive of per-step snapshot data."""

    def __init__(self, path: Path, mode: str = "r"):
        self.path = Path(path)
        self._zip = zipfile.ZipFile(self.path, mode=mode,
                                    compression=zipfile.ZIP_DEFLATED, compresslevel=6)
        self._steps: list[int] = []
        self._times: list[float] = []

    def close(self) -> None:
        self._zip.close()

    def _write(self, name: str, payload: bytes) -> None:
        info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
        info.compress_type = zipfile.ZIP_DEFLATED
        info.external_attr = 0o644 << 16
        self._zip.writestr(info, payload)

    def _write_array(self, name: str, array: np.ndarray) -> None:
        buf = io.BytesIO()
        np.save(buf, array)
        self._write(name, buf.getvalue())

    def write_world_index(self, engine: Engine) -> None:
        grid = engine.world.grid
        areas = [[cell.area_id, cell.center.x, cell.center.y]
                 for cell in engine.world.area_map.cells]
        payload = {
            "tile_size_m": grid.tile_size_m,
            "nx": grid.nx,
            "ny": grid.ny,
            "min_x": grid.bbox.min_x,
            "min_y": grid.bbox.min_y,
            "areas": areas,
        }
        self._write("world.json", json.dumps(payload, sort_keys=True).encode())

    def write_step(self, step: int, snap: Snapshot) -> None:
        prefix = f"step_{step:05d}"
        for plane, grid in sorted(snap.rssi_per_tile.items()):
            self._write_array(f"{prefix}/rssi_{plane}.npy", grid)
        self._write_array(f"{prefix}/density.npy", snap.density_per_area)
        users = {
            "ids": [u.user_id for u in snap.users],
            "kinds": [u.kind.value for u in snap.users],
            "tiles": [u.tile_id for u in snap.users],
            "bs": [-1 if u.bs_id is None else u.bs_id for u in snap.users],
            "rate_bit_s": [0.0 if u.budget is None else u.budget.datarate_bit_s
                           for u in snap.users],
            "rssi_dbm": [None if u.budget is None else u.budget.rssi_dbm
                         for u in snap.users],
        }
        self._write(f"{prefix}/users.json", json.dumps(users, sort_keys=True).encode())
        meta = {
            "time_s": snap.time_s,
            "coverage_fraction": snap.coverage_fraction,
            "n_users": snap.aggregate.n_users,
            "n_assigned": snap.aggregate.n_assigned,
            "mean_datarate_bit_s": snap.aggregate.mean_datarate_bit_s,
            "median_datarate_bit_s": snap.aggregate.median_datarate_bit_s,
        }
        self._write(f"{prefix}/meta.json", json.dumps(meta, sort_keys=True).encode())
        self._steps.append(step)
        self._times.append(snap.time_s)

    def finish(self) -> None:
        self._write("index.json", json.dumps(
            {"steps": self._steps, "times_s": self._times}, sort_keys=True).encode())
        self.close()

    # -- reading -----------------------------------------------------------

    def read_json(self, name: str):
        return json.loads(self._zip.read(name))

    def read_array(self, name: str) -> np.ndarray:
        return np.load(io.BytesIO(self._zip.read(name)))

    def available_steps(self) -> list[int]:
        return self.read_json("index.json")["steps"]


def write_manifest(out_dir: Path, cfg: ScenarioConfig, engine: Engine,
                   policy: str, horizon_steps: int, seed: int) -> None:
    """Everything needed to reproduce the run exactly, written before stepping."""
    payload = {
        "config": resolved_config_dict(cfg),
        "policy": policy,
        "horizon_steps": horizon_steps,
        "run_seed": seed,
        "digests": {
            "map": engine.world.map_bytes_digest.hex(),
            "geometry_config": geometry_config_digest(cfg).hex(),
            "plane_config_macrocell": plane_config_digest(cfg, cfg.macro_plane).hex(),
            "plane_config_femtocell": plane_config_digest(cfg, cfg.femto_plane).hex(),
        },
        "artifacts": {
            "snapshots": SNAPSHOT_ARCHIVE,
            "steps": STEPS_FILENAME,
            "final": FINAL_FILENAME,
            "timings": TIMINGS_FILENAME,
        },
        "world_stats": engine.world.stats,
    }
    dump_json(out_dir / MANIFEST_FILENAME, payload)


def write_steps_csv(out_dir: Path, summary: RunSummary) -> None:
    columns = ["step", "time_s", "n_users", "n_assigned", "mean_datarate_bit_s",
               "median_datarate_bit_s", "mean_datarate_top_quartile_bit_s",
               "n_users_top_quartile", "coverage_fraction"]
    lines = [",".join(columns)]
    for row in summary.steps:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in columns))
    (out_dir / STEPS_FILENAME).write_text("\n".join(lines) + "\n")


def write_final(out_dir: Path, engine: Engine, summary: RunSummary) -> None:
    placement = engine.placement
    payload = {
        "summary": summary.totals(),
        "placement": {
            "femto_selected": len(placement.selected),
            "coverage_fraction": placement.coverage_fraction,
            "target_reached": placement.target_reached,
            "skipped_by_separation": placement.skipped_by_separation,
        },
        "base_stations": engine.bs_summaries(),
        "clamp_warnings": engine.clamp_warnings,
    }
    dump_json(out_dir / FINAL_FILENAME, payload)


# --------------------------------------------------------------------------
# Emission of plot-ready grids and tables
# --------------------------------------------------------------------------

@dataclass
class EmitResult:
    files: list[Path]


def _open_store(run_dir: Path) -> SnapshotStore:
    archive = run_dir / SNAPSHOT_ARCHIVE
    if not archive.exists():
        raise TraceDataError(f"no snapshot archive at {archive}; run the scenario first")
    return SnapshotStore(archive, mode="r")


def _check_step(store: SnapshotStore, step: int) -> None:
    steps = store.available_steps()
    if step not in steps:
        raise TraceDataError(
            f"step {step} not in the archive; available steps: "
            f"{steps[0]}..{steps[-1]}" if steps else "archive is empty")


def _fmt(value: float) -> str:
    return repr(float(value))


def emit_rssi_heatmap(run_dir: Path, step: int, out_dir: Path | None = None) -> EmitResult:
    """One CSV per plane: tile center coordinates and best-server RSSI.

    Tiles with no reachable server carry the -999 sentinel. One row per
    tile, ordered by tile id.
    """
    store = _open_store(run_dir)
    try:
        _check_step(store, step)
        world = store.read_json("world.json")
        out_dir = out_dir or (run_dir / "emit")
        out_dir.mkdir(parents=True, exist_ok=True)
        nx, ny = world["nx"], world["ny"]
        size = world["tile_size_m"]
        xs = world["min_x"] + (np.arange(nx) + 0.5) * size
        ys = world["min_y"] + (np.arange(ny) + 0.5) * size
        files = []
        for plane in ("macrocell", "femtocell"):
            grid = store.read_array(f"step_{step:05d}/rssi_{plane}.npy")
            path = out_dir / f"rssi_heatmap_{plane}_step{step}.csv"
            lines = ["tile_x_m,tile_y_m,rssi_dbm"]
            for tile_id in range(nx * ny):
                iy, ix = divmod(tile_id, nx)
                lines.append(f"{_fmt(xs[ix])},{_fmt(ys[iy])},{_fmt(grid[tile_id])}")
            path.write_text("\n".join(lines) + "\n")
            files.append(path)
        return EmitResult(files=files)
    finally:
        store.close()


def emit_density(run_dir: Path, step: int, out_dir: Path | None = None) -> EmitResult:
    store = _open_store(run_dir)
    try:
        _check_step(store, step)
        world = store.read_json("world.json")
        out_dir = out_dir or (run_dir / "emit")
        out_dir.mkdir(parents=True, exist_ok=True)
        density = store.read_array(f"step_{step:05d}/density.npy")
        path = out_dir / f"density_step{step}.csv"
        lines = ["area_id,center_x_m,center_y_m,count"]
        for area_id, cx, cy in world["areas"]:
            lines.append(f"{area_id},{_fmt(cx)},{_fmt(cy)},{int(density[area_id])}")
        path.write_text("\n".join(lines) + "\n")
        return EmitResult(files=[path])
    finally:
        store.close()


def emit_datarate(run_dir: Path, step: int, out_dir: Path | None = None) -> EmitResult:
    store = _open_store(run_dir)
    try:
        _check_step(store, step)
        out_dir = out_dir or (run_dir / "emit")
        out_dir.mkdir(parents=True, exist_ok=True)
        users = store.read_json(f"step_{step:05d}/users.json")
        rows = sorted(zip(users["ids"], users["kinds"], users["tiles"],
                          users["bs"], users["rate_bit_s"]))
        path = out_dir / f"datarate_step{step}.csv"
        lines = ["user_id,kind,tile_id,bs_id,datarate_bit_s"]
        for uid, kind, tile, bs, rate in rows:
            lines.append(f"{uid},{kind},{tile},{bs},{_fmt(rate)}")
        path.write_text("\n".join(lines) + "\n")
        return EmitResult(files=[path])
    finally:
        store.close()


EMITTERS = {
    "rssi-heatmap": emit_rssi_heatmap,
    "density": emit_density,
    "datarate": emit_datarate,
}


def run_to_directory(engine: Engine, policy: str, out_dir: Path,
                     horizon_steps: int | None = None, seed: int | None = None,
                     timings: dict | None = None) -> RunSummary:
    """Execute a scenario and persist the full output tree."""
    out_dir.mkdir(parents=True, exist_ok=True)
    steps = engine.horizon_steps if horizon_steps is None else min(
        horizon_steps, engine.horizon_steps)
    run_seed = engine.run_seed if seed is None else seed
    write_manifest(out_dir, engine.cfg, engine, policy, steps, run_seed)
    store = SnapshotStore(out_dir / SNAPSHOT_ARCHIVE, mode="w")
    store.write_world_index(engine)
    step_times: list[float] = []
    last = time.perf_counter()

    def on_snapshot(step: int, snap: Snapshot):
        nonlocal last
        store.write_step(step, snap)
        now = time.perf_counter()
        step_times.append(now - last)
        last = now

    summary = run_scenario(engine, policy, horizon_steps=steps,
                           on_snapshot=on_snapshot, seed=seed)
    store.finish()
    write_steps_csv(out_dir, summary)
    write_final(out_dir, engine, summary)
    payload = dict(timings or {})
    payload["per_step_s"] = step_times
    dump_json(out_dir / TIMINGS_FILENAME, payload)
    return summary
