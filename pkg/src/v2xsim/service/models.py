"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class ActionModel(BaseModel):
    type: Literal["set_tx_power", "set_enabled"]
    bs_id: int
    tx_power_dbm: Optional[float] = None
    enabled: Optional[bool] = None


class StepRequest(BaseModel):
    actions: list[ActionModel] = Field(default_factory=list)
    full: bool = False


class ResetRequest(BaseModel):
    seed: Optional[int] = None
    full: bool = False


class ApplyActionsRequest(BaseModel):
    actions: list[ActionModel]


class UserModel(BaseModel):
    user_id: str
    kind: str
    x_m: float
    y_m: float
    tile_id: int
    bs_id: Optional[int]
    rssi_dbm: Optional[float]
    snr_db: Optional[float]
    datarate_bit_s: float


class SnapshotResponse(BaseModel):
    time_s: float
    coverage_fraction: float
    n_users: int
    n_assigned: int
    mean_datarate_bit_s: float
    median_datarate_bit_s: float
    mean_datarate_top_quartile_bit_s: float
    density_per_area: list[int]
    users: list[UserModel]
    rssi_per_tile: Optional[dict[str, list[float]]] = None


class BaseStationModel(BaseModel):
    bs_id: int
    plane: str
    site_id: int
    x_m: float
    y_m: float
    height_m: float
    origin: str
    area_id: int
    tx_power_dbm: float
    enabled: bool


class HealthResponse(BaseModel):
    status: str
    time_s: float
    horizon_steps: int
    n_tiles: int
    n_base_stations: int


class OkResponse(BaseModel):
    ok: bool = True
