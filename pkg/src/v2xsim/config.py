"""Scenario configuration: JSON schema, defaults, validation, digests.

A scenario is a single JSON document with explicit units in the key names.
Unknown keys are rejected with the offending file and key path so typos
cannot silently fall back to defaults. Digests over the map bytes and over
the geometry- and radio-affecting parts of the configuration key the link
cache invalidation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .osm import DEFAULT_LAMPPOST_ROAD_CLASSES
from .radio import PlaneKind, RadioPlaneConfig

DEFAULT_MACROCELL = dict(
    tx_power_dbm_range=(20.0, 43.0),
    tx_gain_dbi=18.0,
    rx_gain_dbi=0.0,
    carrier_freq_hz=2.6e9,
    bandwidth_hz=20e6,
    noise_figure_db=9.0,            # assumed; not part of the plane tables
    beamwidth_deg=120.0,
    pl_model_los="tr36873_uma_los",
    pl_model_nlos="cost_hata",
    pl_exponent_los=None,
    pl_exponent_nlos=None,
    shadowing_sigma_db=0.0,
    bs_height_range_m=(15.0, 50.0),
    min_site_separation_m=0.0,
    snr_cutoff_db=-10.0,
)

DEFAULT_FEMTOCELL = dict(
    tx_power_dbm_range=(15.0, 25.0),
    tx_gain_dbi=22.6,
    rx_gain_dbi=22.6,
    carrier_freq_hz=60e9,
    bandwidth_hz=2.16e9,
    noise_figure_db=9.0,
    beamwidth_deg=15.0,
    pl_model_los="log_distance",
    pl_model_nlos="log_distance",
    pl_exponent_los=2.66,
    pl_exponent_nlos=7.17,
    shadowing_sigma_db=0.0,
    bs_height_range_m=(5.0, 15.0),
    min_site_separation_m=100.0,
    snr_cutoff_db=-10.0,
)


@dataclass(frozen=True)
class GeometryConfig:
    simplify_tolerance_m: float = 0.5
    gap_close_m: float = 0.05
    min_block_area_m2: float = 1.0


@dataclass(frozen=True)
class SitesConfig:
    lamppost_spacing_m: float = 25.0
    lamppost_lateral_offset_m: float = 3.0
    lamppost_road_classes: tuple[str, ...] = DEFAULT_LAMPPOST_ROAD_CLASSES
    femto_mount_height_range_m: tuple[float, float] = (5.0, 15.0)
    macro_grid_spacing_m: float = 500.0


@dataclass(frozen=True)
class HeightsConfig:
    building_height_range_m: tuple[float, float] = (6.0, 30.0)
    levels_to_m: float = 3.0


@dataclass(frozen=True)
class PlacementConfig:
    femto_coverage_target: float = 0.9


@dataclass(frozen=True)
class MobilityConfig:
    source: str = "fcd"                 # "fcd" | "synth"
    fcd_path: str | None = None
    fcd_geo_coordinates: bool = False
    step_length_s: float = 1.0
    synth_vehicles: int = 0
    synth_pedestrians: int = 0
    synth_horizon_s: float = 200.0


@dataclass(frozen=True)
class IndoorConfig:
    enabled: bool = True
    weibull_shape_k: float = 0.8
    weibull_scale_lambda: float = 30.0
    cap_per_building: int = 100
    refresh_epoch_s: float = 60.0


@dataclass(frozen=True)
class SeedsConfig:
    world_seed: int = 1
    run_seed: int = 2


@dataclass(frozen=True)
class ScenarioConfig:
    map_path: Path
    map_center: tuple[float, float] | None = None   # lat, lon; None = bounds center
    tile_size_m: float = 4.0
    area_shape: str = "square"
    area_size_m: float = 200.0
    user_height_m: float = 1.5
    cull_margin_db: float = 10.0
    horizon_steps: int | None = None
    policy: str = "static-median"
    cache_dir: Path = Path("cache")
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    heights: HeightsConfig = field(default_factory=HeightsConfig)
    sites: SitesConfig = field(default_factory=SitesConfig)
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    indoor: IndoorConfig = field(default_factory=IndoorConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)
    macro_plane: RadioPlaneConfig = None  # type: ignore[assignment]
    femto_plane: RadioPlaneConfig = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.area_shape not in ("square", "hexagon"):
            raise ConfigError(f"area_shape must be square or hexagon, got {self.area_shape!r}")
        if self.tile_size_m <= 0 or self.area_size_m <= 0:
            raise ConfigError("tile_size_m and area_size_m must be positive")
        if not (0.0 < self.placement.femto_coverage_target <= 1.0):
            raise ConfigError("femto_coverage_target must be in (0, 1]")
        if self.mobility.source not in ("fcd", "synth"):
            raise ConfigError(f"mobility source must be fcd or synth, got {self.mobility.source!r}")
        if self.mobility.source == "fcd" and not self.mobility.fcd_path:
            raise ConfigError("mobility source 'fcd' needs mobility.fcd_path")
        if self.macro_plane is None or self.femto_plane is None:
            raise ConfigError("both plane configs are required")


def _plane_from_dict(kind: PlaneKind, defaults: dict, data: dict, where: str) -> RadioPlaneConfig:
    merged = dict(defaults)
    for key, value in data.items():
        if key not in merged:
            raise ConfigError(f"{where}: unknown plane key {key!r}")
        merged[key] = value
    for key in ("tx_power_dbm_range", "bs_height_range_m"):
        merged[key] = tuple(float(v) for v in merged[key])
    return RadioPlaneConfig(plane=kind, **merged)


def _take(data: dict, where: str, allowed: dict[str, Any]) -> dict:
    out = dict(allowed)
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r} "
                              f"(expected one of {sorted(allowed)})")
        out[key] = value
    return out


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ScenarioConfig:
    """Load and validate a scenario configuration file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if overrides:
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    return config_from_dict(raw, base_dir=path.parent, where=str(path))


def config_from_dict(raw: dict, base_dir: Path = Path("."), where: str = "<dict>") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: configuration must be a JSON object")
    known_sections = {
        "map_path": None, "map_center_lat_lon": None, "tile_size_m": 4.0,
        "area_shape": "square", "area_size_m": 200.0, "user_height_m": 1.5,
        "cull_margin_db": 10.0, "horizon_steps": None, "policy": "static-median",
        "cache_dir": "cache",
        "geometry": {}, "heights": {}, "sites": {}, "placement": {},
        "mobility": {}, "indoor": {}, "seeds": {}, "planes": {},
    }
    top = _take(raw, where, known_sections)
    if top["map_path"] is None:
        raise ConfigError(f"{where}: map_path is required")

    geometry = GeometryConfig(**_take(top["geometry"], f"{where}:geometry", {
        "simplify_tolerance_m": 0.5, "gap_close_m": 0.05, "min_block_area_m2": 1.0}))
    heights_raw = _take(top["heights"], f"{where}:heights", {
        "building_height_range_m": [6.0, 30.0], "levels_to_m": 3.0})
    heights = HeightsConfig(
        building_height_range_m=tuple(float(v) for v in heights_raw["building_height_range_m"]),
        levels_to_m=float(heights_raw["levels_to_m"]))
    sites_raw = _take(top["sites"], f"{where}:sites", {
        "lamppost_spacing_m": 25.0, "lamppost_lateral_offset_m": 3.0,
        "lamppost_road_classes": list(DEFAULT_LAMPPOST_ROAD_CLASSES),
        "femto_mount_height_range_m": [5.0, 15.0], "macro_grid_spacing_m": 500.0})
    sites = SitesConfig(
        lamppost_spacing_m=float(sites_raw["lamppost_spacing_m"]),
        lamppost_lateral_offset_m=float(sites_raw["lamppost_lateral_offset_m"]),
        lamppost_road_classes=tuple(sites_raw["lamppost_road_classes"]),
        femto_mount_height_range_m=tuple(float(v) for v in sites_raw["femto_mount_height_range_m"]),
        macro_grid_spacing_m=float(sites_raw["macro_grid_spacing_m"]))
    placement = PlacementConfig(**_take(top["placement"], f"{where}:placement", {
        "femto_coverage_target": 0.9}))
    mobility = MobilityConfig(**_take(top["mobility"], f"{where}:mobility", {
        "source": "fcd", "fcd_path": None, "fcd_geo_coordinates": False,
        "step_length_s": 1.0, "synth_vehicles": 0, "synth_pedestrians": 0,
        "synth_horizon_s": 200.0}))
    indoor = IndoorConfig(**_take(top["indoor"], f"{where}:indoor", {
        "enabled": True, "weibull_shape_k": 0.8, "weibull_scale_lambda": 30.0,
        "cap_per_building": 100, "refresh_epoch_s": 60.0}))
    seeds = SeedsConfig(**_take(top["seeds"], f"{where}:seeds", {
        "world_seed": 1, "run_seed": 2}))

    planes_raw = top["planes"]
    if not isinstance(planes_raw, dict):
        raise ConfigError(f"{where}:planes must be an object")
    for key in planes_raw:
        if key not in ("macrocell", "femtocell"):
            raise ConfigError(f"{where}:planes: unknown plane {key!r}")
    macro = _plane_from_dict(PlaneKind.MACROCELL, DEFAULT_MACROCELL,
                             planes_raw.get("macrocell", {}), f"{where}:planes.macrocell")
    femto = _plane_from_dict(PlaneKind.FEMTOCELL, DEFAULT_FEMTOCELL,
                             planes_raw.get("femtocell", {}), f"{where}:planes.femtocell")

    center = top["map_center_lat_lon"]
    if center is not None:
        center = (float(center[0]), float(center[1]))

    map_path = Path(top["map_path"])
    if not map_path.is_absolute():
        map_path = (base_dir / map_path).resolve()
    cache_dir = Path(top["cache_dir"])
    if not cache_dir.is_absolute():
        cache_dir = (base_dir / cache_dir).resolve()
    fcd_path = mobility.fcd_path
    if fcd_path is not None and not Path(fcd_path).is_absolute():
        mobility = MobilityConfig(**{**mobility.__dict__,
                                     "fcd_path": str((base_dir / fcd_path).resolve())})

    return ScenarioConfig(
        map_path=map_path, map_center=center,
        tile_size_m=float(top["tile_size_m"]), area_shape=top["area_shape"],
        area_size_m=float(top["area_size_m"]), user_height_m=float(top["user_height_m"]),
        cull_margin_db=float(top["cull_margin_db"]),
        horizon_steps=None if top["horizon_steps"] is None else int(top["horizon_steps"]),
        policy=str(top["policy"]),
        cache_dir=cache_dir, geometry=geometry, heights=heights, sites=sites,
        placement=placement, mobility=mobility, indoor=indoor, seeds=seeds,
        macro_plane=macro, femto_plane=femto,
    )


# --------------------------------------------------------------------------
# Digests and resolved-config serialization
# --------------------------------------------------------------------------

def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _digest(payload: str) -> bytes:
    return hashlib.sha256(payload.encode("utf-8")).digest()


def map_digest(map_bytes: bytes) -> bytes:
    return hashlib.sha256(map_bytes).digest()


def plane_dict(plane: RadioPlaneConfig) -> dict:
    return {
        "plane": plane.plane.value,
        "tx_power_dbm_range": list(plane.tx_power_dbm_range),
        "tx_gain_dbi": plane.tx_gain_dbi,
        "rx_gain_dbi": plane.rx_gain_dbi,
        "carrier_freq_hz": plane.carrier_freq_hz,
        "bandwidth_hz": plane.bandwidth_hz,
        "noise_figure_db": plane.noise_figure_db,
        "beamwidth_deg": plane.beamwidth_deg,
        "pl_model_los": plane.pl_model_los,
        "pl_model_nlos": plane.pl_model_nlos,
        "pl_exponent_los": plane.pl_exponent_los,
        "pl_exponent_nlos": plane.pl_exponent_nlos,
        "shadowing_sigma_db": plane.shadowing_sigma_db,
        "bs_height_range_m": list(plane.bs_height_range_m),
        "min_site_separation_m": plane.min_site_separation_m,
        "snr_cutoff_db": plane.snr_cutoff_db,
    }


def geometry_config_digest(cfg: ScenarioConfig) -> bytes:
    """Digest over everything that shapes the world geometry and sites."""
    payload = {
        "tile_size_m": cfg.tile_size_m,
        "map_center": cfg.map_center,
        "geometry": cfg.geometry.__dict__,
        "heights": {"building_height_range_m": list(cfg.heights.building_height_range_m),
                    "levels_to_m": cfg.heights.levels_to_m},
        "sites": {"lamppost_spacing_m": cfg.sites.lamppost_spacing_m,
                  "lamppost_lateral_offset_m": cfg.sites.lamppost_lateral_offset_m,
                  "lamppost_road_classes": list(cfg.sites.lamppost_road_classes),
                  "femto_mount_height_range_m": list(cfg.sites.femto_mount_height_range_m),
                  "macro_grid_spacing_m": cfg.sites.macro_grid_spacing_m},
        "world_seed": cfg.seeds.world_seed,
    }
    return _digest(canonical_json(payload))


def plane_config_digest(cfg: ScenarioConfig, plane: RadioPlaneConfig) -> bytes:
    payload = {
        "plane": plane_dict(plane),
        "user_height_m": cfg.user_height_m,
        "cull_margin_db": cfg.cull_margin_db,
    }
    return _digest(canonical_json(payload))


def resolved_config_dict(cfg: ScenarioConfig) -> dict:
    """Every knob with defaults materialized, for the run manifest."""
    return {
        "map_path": str(cfg.map_path),
        "map_center_lat_lon": list(cfg.map_center) if cfg.map_center else None,
        "tile_size_m": cfg.tile_size_m,
        "area_shape": cfg.area_shape,
        "area_size_m": cfg.area_size_m,
        "user_height_m": cfg.user_height_m,
        "cull_margin_db": cfg.cull_margin_db,
        "horizon_steps": cfg.horizon_steps,
        "policy": cfg.policy,
        "cache_dir": str(cfg.cache_dir),
        "geometry": dict(cfg.geometry.__dict__),
        "heights": {"building_height_range_m": list(cfg.heights.building_height_range_m),
                    "levels_to_m": cfg.heights.levels_to_m},
        "sites": {"lamppost_spacing_m": cfg.sites.lamppost_spacing_m,
                  "lamppost_lateral_offset_m": cfg.sites.lamppost_lateral_offset_m,
                  "lamppost_road_classes": list(cfg.sites.lamppost_road_classes),
                  "femto_mount_height_range_m": list(cfg.sites.femto_mount_height_range_m),
                  "macro_grid_spacing_m": cfg.sites.macro_grid_spacing_m},
        "placement": dict(cfg.placement.__dict__),
        "mobility": dict(cfg.mobility.__dict__),
        "indoor": dict(cfg.indoor.__dict__),
        "seeds": dict(cfg.seeds.__dict__),
        "planes": {"macrocell": plane_dict(cfg.macro_plane),
                   "femtocell": plane_dict(cfg.femto_plane)},
    }
