"""The sequential-query simulation engine.

Owns the mutable scenario state (deployed base stations, simulation clock,
mobility position), applies agent actions atomically, advances one step at
a time, and emits immutable per-step snapshots: user associations and link
budgets, per-area densities, per-tile best-server RSSI, and aggregate
datarate statistics. Every snapshot is a pure function of (config, seeds,
action sequence).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import ScenarioConfig
from .errors import ConfigError, SimulationError, UnknownEntityError
from .geometry import Point2D
from .linkcache import LinkTable
from .mobility import (
    IndoorPopulation,
    MobilityProvider,
    SyntheticWaypointProvider,
    TracePlayback,
    UserKind,
    UserPosition,
    parse_fcd,
    sample_indoor,
)
from .radio import LinkBudgetResult, RadioPlaneConfig, link_budget, shadowing_db
from .scenario import CacheBundle, World, build_or_load_caches, build_world
from .world import CandidateSite

RSSI_NO_LINK_DBM = -999.0


# --------------------------------------------------------------------------
# Deployment
# --------------------------------------------------------------------------

@dataclass
class DeployedBs:
    bs_id: int
    site: CandidateSite
    plane: RadioPlaneConfig
    tx_power_dbm: float
    enabled: bool = True
    area_id: int = -1

    def clamp_tx(self, value: float) -> tuple[float, bool]:
        lo, hi = self.plane.tx_power_dbm_range
        clamped = min(max(value, lo), hi)
        return clamped, clamped != value


@dataclass(frozen=True)
class SetTxPower:
    bs_id: int
    tx_power_dbm: float


@dataclass(frozen=True)
class SetEnabled:
    bs_id: int
    enabled: bool


Action = SetTxPower | SetEnabled


@dataclass
class PlacementResult:
    selected: list[CandidateSite]
    coverage_fraction: float
    target_reached: bool
    covered_tiles: int
    skipped_by_separation: int


def place_femtocells(candidates: Sequence[CandidateSite], cache: LinkTable,
                     coverage_target: float, min_separation_m: float) -> PlacementResult:
    """Greedy max-coverage femtocell selection.

    Repeatedly picks the candidate covering the most not-yet-covered tiles
    (a tile counts as covered when a cached link to the candidate exists),
    skipping candidates closer than ``min_separation_m`` to any already
    selected site; ties go to the lower site id. Stops at the coverage
    target or when no candidate adds coverage, in which case the result
    reports the shortfall.
    """
    if not candidates:
        raise ConfigError("femtocell placement needs at least one candidate")
    ordered = sorted(candidates, key=lambda s: s.site_id)
    site_ids = [s.site_id for s in ordered]
    matrix = cache.coverage_matrix(site_ids)
    n_tiles = cache.n_tiles
    uncovered = np.ones(n_tiles, dtype=bool)
    eligible = np.ones(len(ordered), dtype=bool)
    selected: list[CandidateSite] = []
    skipped = 0
    target_tiles = coverage_target * n_tiles
    covered = 0
    while covered < target_tiles:
        gains = np.where(eligible, matrix[:, uncovered].sum(axis=1), -1)
        best = int(np.argmax(gains))
        if gains[best] <= 0:
            break
        chosen = ordered[best]
        selected.append(chosen)
        eligible[best] = False
        uncovered &= ~matrix[best]
        covered = n_tiles - int(uncovered.sum())
        if min_separation_m > 0.0:
            for i, cand in enumerate(ordered):
                if eligible[i]:
                    d = math.hypot(cand.position.x - chosen.position.x,
                                   cand.position.y - chosen.position.y)
                    if d < min_separation_m:
                        eligible[i] = False
                        skipped += 1
    coverage_fraction = covered / n_tiles
    return PlacementResult(selected=selected, coverage_fraction=coverage_fraction,
                           target_reached=coverage_fraction >= coverage_target,
                           covered_tiles=covered, skipped_by_separation=skipped)


def place_macrocells(world: World, plane: RadioPlaneConfig) -> list[CandidateSite]:
    """All macro candidates deploy, spaced by the configured lattice pitch."""
    return list(world.macro_candidates)


# --------------------------------------------------------------------------
# Snapshots
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UserState:
    user_id: str
    kind: UserKind
    position: Point2D
    tile_id: int
    bs_id: int | None
    budget: LinkBudgetResult | None


@dataclass(frozen=True)
class AggregateStats:
    n_users: int
    n_assigned: int
    mean_datarate_bit_s: float
    median_datarate_bit_s: float
    per_area_mean_datarate_bit_s: np.ndarray
    per_area_median_datarate_bit_s: np.ndarray
    mean_datarate_top_quartile_bit_s: float
    n_users_top_quartile: int


@dataclass(frozen=True)
class Snapshot:
    time_s: float
    users: tuple[UserState, ...]
    density_per_area: np.ndarray
    rssi_per_tile: dict[str, np.ndarray]
    coverage_fraction: float
    aggregate: AggregateStats


# --------------------------------------------------------------------------
# Engine
# --------------------------------------------------------------------------

class Engine:
    """Single-owner state machine over an immutable world + link caches."""

    def __init__(self, world: World, caches: CacheBundle, run_seed: int | None = None,
                 macro_sectors: bool = False):
        self.world = world
        self.caches = caches
        self.cfg = world.config
        self.macro_sectors = macro_sectors
        self._trace = None
        if self.cfg.mobility.source == "fcd":
            self._trace = parse_fcd(
                self.cfg.mobility.fcd_path,
                geo=self.cfg.mobility.fcd_geo_coordinates,
                origin=world.origin)
        self.run_seed = self.cfg.seeds.run_seed if run_seed is None else run_seed
        self.base_stations: list[DeployedBs] = []
        self.placement: PlacementResult | None = None
        self._deploy()
        self.clamp_warnings = 0
        self.reset(self.run_seed)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, workers: int | None = None,
                    force_rebuild: bool = False) -> "Engine":
        world = build_world(cfg)
        caches = build_or_load_caches(world, workers=workers, force_rebuild=force_rebuild)
        return cls(world, caches)

    def _deploy(self) -> None:
        cfg = self.cfg
        macro_sites = place_macrocells(self.world, cfg.macro_plane)
        self.placement = place_femtocells(
            self.world.femto_candidates, self.caches.femto,
            coverage_target=cfg.placement.femto_coverage_target,
            min_separation_m=cfg.femto_plane.min_site_separation_m)
        femto_sites = sorted(self.placement.selected, key=lambda s: s.site_id)

        self.base_stations = []
        self._initial_tx: list[float] = []
        for site in macro_sites:
            self._add_bs(site, cfg.macro_plane)
        for site in femto_sites:
            self._add_bs(site, cfg.femto_plane)
        self._build_link_matrices()

    def _add_bs(self, site: CandidateSite, plane: RadioPlaneConfig) -> None:
        bs = DeployedBs(
            bs_id=len(self.base_stations), site=site, plane=plane,
            tx_power_dbm=plane.tx_power_dbm_median,
            area_id=self.world.area_map.area_of_point(site.position))
        self.base_stations.append(bs)
        self._initial_tx.append(bs.tx_power_dbm)

    def _build_link_matrices(self) -> None:
        n_tiles = self.world.n_tiles
        n_bs = len(self.base_stations)
        self._pl = np.full((n_bs, n_tiles), np.nan, dtype=np.float64)
        self._gain = np.zeros(n_bs)
        self._noise = np.zeros(n_bs)
        self._cutoff = np.zeros(n_bs)
        for bs in self.base_stations:
            cache = self.caches.macro if bs.plane.plane.value == "macrocell" else self.caches.femto
            row = cache.site_pathloss_dense(bs.site.site_id)
            sigma = bs.plane.shadowing_sigma_db
            if sigma != 0.0:
                rows = cache.site_rows(bs.site.site_id)
                for rec in rows:
                    tile = int(rec["tile_id"])
                    row[tile] += shadowing_db(sigma, self.run_seed,
                                              tile, bs.site.site_id)
            if self.macro_sectors and bs.plane.plane.value == "macrocell":
                row = row + self._sector_mask(bs)
            self._pl[bs.bs_id] = row
            self._gain[bs.bs_id] = bs.plane.tx_gain_dbi + bs.plane.rx_gain_dbi
            self._noise[bs.bs_id] = bs.plane.noise_floor_dbm()
            self._cutoff[bs.bs_id] = bs.plane.snr_cutoff_db

    def _sector_mask(self, bs: DeployedBs) -> np.ndarray:
        from .radio import sector_attenuation_db
        tx, ty = self.world.grid.incenters()
        bearing = np.degrees(np.arctan2(ty - bs.site.position.y, tx - bs.site.position.x))
        mask = np.empty_like(bearing)
        for i, theta in enumerate(bearing):
            mask[i] = min(sector_attenuation_db(theta - boresight, bs.plane.beamwidth_deg)
                          for boresight in (0.0, 120.0, -120.0))
        return mask

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int | None = None) -> Snapshot:
        """Rewind to t=0 deterministically; optionally rebind the run seed."""
        if seed is not None and seed != self.run_seed:
            self.run_seed = seed
            if any(bs.plane.shadowing_sigma_db != 0.0 for bs in self.base_stations):
                self._build_link_matrices()  # shadow field is keyed by the run seed
        for bs, tx in zip(self.base_stations, self._initial_tx):
            bs.tx_power_dbm = tx
            bs.enabled = True
        self.clamp_warnings = 0
        self._provider = self._make_provider()
        self.step_length_s = self._provider.step_length_s
        provider_steps = None
        if math.isfinite(self._provider.horizon_s):
            provider_steps = int(round(self._provider.horizon_s / self.step_length_s))
        if self.cfg.horizon_steps is None:
            if provider_steps is None:
                raise ConfigError("horizon_steps is required for an unbounded provider")
            self.horizon_steps = provider_steps
        elif provider_steps is None:
            self.horizon_steps = self.cfg.horizon_steps
        else:
            self.horizon_steps = min(self.cfg.horizon_steps, provider_steps)
        self._step_index = 0
        self._indoor: IndoorPopulation | None = None
        self._indoor_users: list[UserPosition] = []
        self._refresh_indoor(0.0)
        self.snapshot = self._observe(0.0)
        return self.snapshot

    def _make_provider(self) -> MobilityProvider:
        mob = self.cfg.mobility
        if mob.source == "fcd":
            return TracePlayback(self._trace, self.world.grid, self.world.bbox)
        return SyntheticWaypointProvider(
            mob.synth_vehicles, mob.synth_pedestrians, self.world.bbox, self.world.grid,
            seed=self.run_seed, step_length_s=mob.step_length_s,
            horizon_s=mob.synth_horizon_s)

    def _refresh_indoor(self, t: float) -> None:
        if not self.cfg.indoor.enabled or not self.world.buildings:
            self._indoor_users = []
            return
        epoch = int(t // self.cfg.indoor.refresh_epoch_s)
        if self._indoor is not None and self._indoor.epoch == epoch:
            return
        building_ids = [b.source_id for b in self.world.buildings]
        self._indoor = sample_indoor(
            building_ids, self.cfg.indoor.weibull_shape_k,
            self.cfg.indoor.weibull_scale_lambda, self.cfg.indoor.cap_per_building,
            self.run_seed, epoch)
        users = []
        for bid in building_ids:
            tile_id = self.world.building_incenter_tile[bid]
            position = self.world.grid.incenter(tile_id)
            for i in range(self._indoor.counts[bid]):
                users.append(UserPosition(user_id=f"in:{bid}:{i}", kind=UserKind.INDOOR,
                                          position=position, tile_id=tile_id))
        self._indoor_users = users

    # -- actions -----------------------------------------------------------

    def apply_actions(self, actions: Sequence[Action]) -> None:
        """Validate then apply; an unknown bs id rejects the whole list."""
        for action in actions:
            if not (0 <= action.bs_id < len(self.base_stations)):
                raise UnknownEntityError(f"unknown base station id {action.bs_id}")
            if not isinstance(action, (SetTxPower, SetEnabled)):
                raise UnknownEntityError(f"unknown action type {type(action).__name__}")
        for action in actions:
            bs = self.base_stations[action.bs_id]
            if isinstance(action, SetTxPower):
                clamped, warned = bs.clamp_tx(action.tx_power_dbm)
                bs.tx_power_dbm = clamped
                if warned:
                    self.clamp_warnings += 1
            else:
                bs.enabled = bool(action.enabled)

    # -- stepping ----------------------------------------------------------

    def step(self, actions: Sequence[Action] = ()) -> Snapshot:
        """Apply actions, advance one step, and observe the new state."""
        if self._step_index >= self.horizon_steps:
            raise SimulationError(
                f"cannot step past the horizon ({self.horizon_steps} steps)")
        self.apply_actions(actions)
        self._step_index += 1
        t = self._step_index * self.step_length_s
        self._refresh_indoor(t)
        self.snapshot = self._observe(t)
        return self.snapshot

    # -- observation -------------------------------------------------------

    def associate_users(self, users: Sequence[UserPosition]) -> list[UserState]:
        """Attach each user to the enabled BS with maximum RSSI at its tile.

        Ties break toward the lower bs id; a best SNR below the plane's
        sensitivity cutoff leaves the user unassigned. Datarates share each
        BS's bandwidth equally among its associated users.
        """
        enabled = [bs.bs_id for bs in self.base_stations if bs.enabled]
        n_users = len(users)
        if not enabled or n_users == 0:
            return [UserState(u.user_id, u.kind, u.position, u.tile_id, None, None)
                    for u in users]
        rows = np.asarray(enabled, dtype=np.int64)
        tiles = np.asarray([u.tile_id for u in users], dtype=np.int64)
        tx = np.asarray([self.base_stations[b].tx_power_dbm for b in enabled])
        rssi = tx[:, None] + self._gain[rows, None] - self._pl[rows][:, tiles]
        rssi = np.where(np.isnan(rssi), -np.inf, rssi)
        best_row = np.argmax(rssi, axis=0)
        best_rssi = rssi[best_row, np.arange(n_users)]
        best_snr = best_rssi - self._noise[rows][best_row]
        assigned = np.isfinite(best_rssi) & (best_snr >= self._cutoff[rows][best_row])
        bs_of_user = np.where(assigned, rows[best_row], -1)
        shared = np.bincount(bs_of_user[assigned], minlength=len(self.base_stations))
        out: list[UserState] = []
        for i, u in enumerate(users):
            if not assigned[i]:
                out.append(UserState(u.user_id, u.kind, u.position, u.tile_id, None, None))
                continue
            bs = self.base_stations[int(bs_of_user[i])]
            budget = link_budget(bs.plane, bs.tx_power_dbm,
                                 float(self._pl[bs.bs_id, u.tile_id]),
                                 shared_users=int(shared[bs.bs_id]))
            out.append(UserState(u.user_id, u.kind, u.position, u.tile_id, bs.bs_id, budget))
        return out

    def density_per_area(self, users: Sequence[UserPosition | UserState]) -> np.ndarray:
        tiles = np.asarray([u.tile_id for u in users], dtype=np.int64)
        n_areas = self.world.area_map.n_areas
        if tiles.size == 0:
            return np.zeros(n_areas, dtype=np.int64)
        return np.bincount(self.world.tile_area[tiles], minlength=n_areas).astype(np.int64)

    def _rssi_grids(self) -> dict[str, np.ndarray]:
        grids = {}
        for plane_name in ("macrocell", "femtocell"):
            rows = [bs.bs_id for bs in self.base_stations
                    if bs.enabled and bs.plane.plane.value == plane_name]
            if not rows:
                grids[plane_name] = np.full(self.world.n_tiles, RSSI_NO_LINK_DBM)
                continue
            idx = np.asarray(rows, dtype=np.int64)
            tx = np.asarray([self.base_stations[b].tx_power_dbm for b in rows])
            rssi = tx[:, None] + self._gain[idx, None] - self._pl[idx]
            best = np.nanmax(np.where(np.isnan(rssi), -np.inf, rssi), axis=0)
            grids[plane_name] = np.where(np.isfinite(best), best, RSSI_NO_LINK_DBM)
        return grids

    def _coverage_fraction(self) -> float:
        rows = [bs.bs_id for bs in self.base_stations if bs.enabled]
        if not rows:
            return 0.0
        covered = ~np.all(np.isnan(self._pl[np.asarray(rows)]), axis=0)
        return float(covered.sum()) / self.world.n_tiles

    def _observe(self, t: float) -> Snapshot:
        outdoor = self._provider.advance(t)
        users = list(outdoor) + self._indoor_users
        states = self.associate_users(users)
        density = self.density_per_area(users)
        rates = np.asarray([s.budget.datarate_bit_s if s.budget is not None else 0.0
                            for s in states])
        tiles = np.asarray([s.tile_id for s in states], dtype=np.int64)
        n_areas = self.world.area_map.n_areas
        per_area_mean = np.zeros(n_areas)
        per_area_median = np.zeros(n_areas)
        if states:
            areas_of_users = self.world.tile_area[tiles]
            sums = np.bincount(areas_of_users, weights=rates, minlength=n_areas)
            counts = np.bincount(areas_of_users, minlength=n_areas)
            mask = counts > 0
            per_area_mean[mask] = sums[mask] / counts[mask]
            order = np.argsort(areas_of_users, kind="stable")
            grouped = np.split(rates[order], np.cumsum(counts)[:-1])
            for area_id, group in enumerate(grouped):
                if group.size:
                    per_area_median[area_id] = float(np.median(group))
            top_threshold = float(np.quantile(density, 0.75))
            top_mask = density >= top_threshold
            in_top = top_mask[areas_of_users]
            topq_users = int(in_top.sum())
            topq_mean = float(rates[in_top].mean()) if topq_users else 0.0
        else:
            topq_users = 0
            topq_mean = 0.0
        aggregate = AggregateStats(
            n_users=len(states),
            n_assigned=sum(1 for s in states if s.bs_id is not None),
            mean_datarate_bit_s=float(rates.mean()) if states else 0.0,
            median_datarate_bit_s=float(np.median(rates)) if states else 0.0,
            per_area_mean_datarate_bit_s=per_area_mean,
            per_area_median_datarate_bit_s=per_area_median,
            mean_datarate_top_quartile_bit_s=topq_mean,
            n_users_top_quartile=topq_users,
        )
        return Snapshot(
            time_s=t,
            users=tuple(states),
            density_per_area=density,
            rssi_per_tile=self._rssi_grids(),
            coverage_fraction=self._coverage_fraction(),
            aggregate=aggregate,
        )

    # -- introspection -----------------------------------------------------

    def bs_summaries(self) -> list[dict]:
        return [{
            "bs_id": bs.bs_id,
            "plane": bs.plane.plane.value,
            "site_id": bs.site.site_id,
            "x_m": bs.site.position.x,
            "y_m": bs.site.position.y,
            "height_m": bs.site.height_m,
            "origin": bs.site.origin.value,
            "area_id": bs.area_id,
            "tx_power_dbm": bs.tx_power_dbm,
            "enabled": bs.enabled,
        } for bs in self.base_stations]


# --------------------------------------------------------------------------
# Policies
# --------------------------------------------------------------------------

def policy_density_tx(densities: np.ndarray, base_stations: Sequence[DeployedBs],
                      plane: RadioPlaneConfig) -> list[Action]:
    """Density-proportional TX power for one plane.

    Each BS is controlled by the density of the area containing its site;
    powers interpolate linearly between the plane's range endpoints across
    the deployed BSs' density spread, so the BSs in the least/most dense
    areas land exactly on the range minimum/maximum. A flat spread puts
    everyone at the median.
    """
    members = [bs for bs in base_stations if bs.plane.plane is plane.plane]
    if not members:
        return []
    lo, hi = plane.tx_power_dbm_range
    controlling = np.asarray([float(densities[bs.area_id]) for bs in members])
    d_min, d_max = controlling.min(), controlling.max()
    actions: list[Action] = []
    for bs, d in zip(members, controlling):
        if d_max == d_min:
            tx = plane.tx_power_dbm_median
        else:
            tx = lo + (d - d_min) / (d_max - d_min) * (hi - lo)
        actions.append(SetTxPower(bs.bs_id, float(tx)))
    return actions


def static_median_policy(snapshot: Snapshot, engine: Engine) -> list[Action]:
    """Ground truth: leave every BS at its plane's median TX power."""
    return []


def adaptive_density_policy(snapshot: Snapshot, engine: Engine) -> list[Action]:
    actions = policy_density_tx(snapshot.density_per_area, engine.base_stations,
                                engine.cfg.macro_plane)
    actions += policy_density_tx(snapshot.density_per_area, engine.base_stations,
                                 engine.cfg.femto_plane)
    return actions


POLICIES: dict[str, Callable[[Snapshot, Engine], list[Action]]] = {
    "static-median": static_median_policy,
    "adaptive-density": adaptive_density_policy,
}


# --------------------------------------------------------------------------
# Scenario execution
# --------------------------------------------------------------------------

@dataclass
class RunSummary:
    policy: str
    steps: list[dict] = field(default_factory=list)
    _rate_sum: float = 0.0
    _rate_count: int = 0
    _topq_sum: float = 0.0
    _topq_count: int = 0
    tx_extremes_ok: bool = True

    def add_step(self, snap: Snapshot, extremes_ok: bool | None = None) -> None:
        agg = snap.aggregate
        self.steps.append({
            "step": len(self.steps) + 1,
            "time_s": snap.time_s,
            "n_users": agg.n_users,
            "n_assigned": agg.n_assigned,
            "mean_datarate_bit_s": agg.mean_datarate_bit_s,
            "median_datarate_bit_s": agg.median_datarate_bit_s,
            "mean_datarate_top_quartile_bit_s": agg.mean_datarate_top_quartile_bit_s,
            "n_users_top_quartile": agg.n_users_top_quartile,
            "coverage_fraction": snap.coverage_fraction,
        })
        self._rate_sum += agg.mean_datarate_bit_s * agg.n_users
        self._rate_count += agg.n_users
        self._topq_sum += agg.mean_datarate_top_quartile_bit_s * agg.n_users_top_quartile
        self._topq_count += agg.n_users_top_quartile
        if extremes_ok is not None:
            self.tx_extremes_ok = self.tx_extremes_ok and extremes_ok

    def totals(self) -> dict:
        return {
            "policy": self.policy,
            "n_steps": len(self.steps),
            "mean_datarate_bit_s": self._rate_sum / self._rate_count if self._rate_count else 0.0,
            "mean_datarate_top_quartile_bit_s":
                self._topq_sum / self._topq_count if self._topq_count else 0.0,
            "tx_extremes_ok": self.tx_extremes_ok,
        }


def _check_tx_extremes(engine: Engine, densities: np.ndarray) -> bool:
    """After an adaptive update, the BSs controlled by the min/max density
    must sit exactly on their plane's range endpoints."""
    ok = True
    for plane in (engine.cfg.macro_plane, engine.cfg.femto_plane):
        members = [bs for bs in engine.base_stations if bs.plane.plane is plane.plane]
        if not members:
            continue
        controlling = [float(densities[bs.area_id]) for bs in members]
        d_min, d_max = min(controlling), max(controlling)
        if d_max == d_min:
            continue
        lo, hi = plane.tx_power_dbm_range
        for bs, d in zip(members, controlling):
            if d == d_max and bs.tx_power_dbm != hi:
                ok = False
            if d == d_min and bs.tx_power_dbm != lo:
                ok = False
    return ok


def run_scenario(engine: Engine, policy_name: str,
                 horizon_steps: int | None = None,
                 on_snapshot: Callable[[int, Snapshot], None] | None = None,
                 seed: int | None = None) -> RunSummary:
    """Reset, then loop policy -> actions -> step to the horizon.

    The snapshot stream goes to ``on_snapshot`` (step 0 is the reset
    snapshot); the returned summary carries per-step aggregates plus pooled
    totals for policy comparison.
    """
    if policy_name not in POLICIES:
        raise ConfigError(f"unknown policy {policy_name!r} (have {sorted(POLICIES)})")
    policy = POLICIES[policy_name]
    adaptive = policy_name == "adaptive-density"
    snap = engine.reset(seed)
    if on_snapshot is not None:
        on_snapshot(0, snap)
    summary = RunSummary(policy=policy_name)
    steps = engine.horizon_steps if horizon_steps is None else min(horizon_steps,
                                                                   engine.horizon_steps)
    for k in range(steps):
        densities = snap.density_per_area
        actions = policy(snap, engine)
        snap = engine.step(actions)
        extremes = _check_tx_extremes(engine, densities) if adaptive else None
        summary.add_step(snap, extremes)
        if on_snapshot is not None:
            on_snapshot(k + 1, snap)
    return summary
