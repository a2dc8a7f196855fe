"""HTTP service wrapping one engine session.

The service hosts a single scenario (the engine is a sequential-query
device, so there is one session per process) and mirrors the line-protocol
commands as REST endpoints:

    GET  /health            liveness plus scenario shape
    GET  /bs                deployed base stations
    GET  /snapshot?full=    current snapshot
    POST /reset             {seed?} -> snapshot at t=0
    POST /step              {actions, full?} -> next snapshot
    POST /actions           apply actions without stepping
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException

from ..bridge import snapshot_payload
from ..engine import Engine, SetEnabled, SetTxPower
from ..errors import SimulationError, UnknownEntityError
from .models import (
    ActionModel,
    ApplyActionsRequest,
    BaseStationModel,
    HealthResponse,
    OkResponse,
    ResetRequest,
    SnapshotResponse,
    StepRequest,
)


def _to_actions(models: list[ActionModel]):
    actions = []
    for m in models:
        if m.type == "set_tx_power":
            if m.tx_power_dbm is None:
                raise HTTPException(status_code=422, detail="set_tx_power needs tx_power_dbm")
            actions.append(SetTxPower(m.bs_id, m.tx_power_dbm))
        else:
            if m.enabled is None:
                raise HTTPException(status_code=422, detail="set_enabled needs enabled")
            actions.append(SetEnabled(m.bs_id, m.enabled))
    return actions


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="v2xsim", version="0.1.0",
                  description="Sequential query interface to a city-scale "
                              "V2X network scenario")
    # One engine, strictly sequential queries: concurrent requests from the
    # server's worker threads must not interleave engine mutations.
    gate = threading.Lock()

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        with gate:
            return HealthResponse(status="ok", time_s=engine.snapshot.time_s,
                                  horizon_steps=engine.horizon_steps,
                                  n_tiles=engine.world.n_tiles,
                                  n_base_stations=len(engine.base_stations))

    @app.get("/bs", response_model=list[BaseStationModel])
    def list_bs() -> list[BaseStationModel]:
        with gate:
            return [BaseStationModel(**b) for b in engine.bs_summaries()]

    @app.get("/snapshot", response_model=SnapshotResponse)
    def get_snapshot(full: bool = False) -> SnapshotResponse:
        with gate:
            return SnapshotResponse(**snapshot_payload(engine.snapshot, full=full))

    @app.post("/reset", response_model=SnapshotResponse)
    def reset(request: ResetRequest) -> SnapshotResponse:
        with gate:
            snap = engine.reset(request.seed)
            return SnapshotResponse(**snapshot_payload(snap, full=request.full))

    @app.post("/step", response_model=SnapshotResponse)
    def step(request: StepRequest) -> SnapshotResponse:
        with gate:
            try:
                snap = engine.step(_to_actions(request.actions))
            except UnknownEntityError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            except SimulationError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            return SnapshotResponse(**snapshot_payload(snap, full=request.full))

    @app.post("/actions", response_model=OkResponse)
    def apply_actions(request: ApplyActionsRequest) -> OkResponse:
        with gate:
            try:
                engine.apply_actions(_to_actions(request.actions))
            except UnknownEntityError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            return OkResponse()

    return app
