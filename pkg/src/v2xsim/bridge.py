"""Language-neutral sequential query interface for external agents.

One JSON object per line, UTF-8, over stdio or a TCP socket. The session
opens with a hello banner ``{"protocol": 1}``; afterwards every request
gets exactly one response, in order. Commands: reset, step, get_snapshot,
list_bs, set_tx_power, set_enabled, shutdown. Snapshots omit the per-tile
RSSI grid unless requested with ``{"full": true}``.

A malformed or unknown request produces an error response and leaves both
the session and the engine untouched.
"""

from __future__ import annotations

import json
import socketserver
import sys
from typing import IO

from .engine import Action, Engine, SetEnabled, SetTxPower, Snapshot
from .errors import SimulationError, UnknownEntityError, V2xSimError

PROTOCOL_VERSION = 1


def snapshot_payload(snap: Snapshot, full: bool = False) -> dict:
    users = sorted(snap.users, key=lambda u: u.user_id)
    payload = {
        "time_s": snap.time_s,
        "coverage_fraction": snap.coverage_fraction,
        "n_users": snap.aggregate.n_users,
        "n_assigned": snap.aggregate.n_assigned,
        "mean_datarate_bit_s": snap.aggregate.mean_datarate_bit_s,
        "median_datarate_bit_s": snap.aggregate.median_datarate_bit_s,
        "mean_datarate_top_quartile_bit_s": snap.aggregate.mean_datarate_top_quartile_bit_s,
        "density_per_area": [int(v) for v in snap.density_per_area],
        "users": [{
            "user_id": u.user_id,
            "kind": u.kind.value,
            "x_m": u.position.x,
            "y_m": u.position.y,
            "tile_id": u.tile_id,
            "bs_id": u.bs_id,
            "rssi_dbm": None if u.budget is None else u.budget.rssi_dbm,
            "snr_db": None if u.budget is None else u.budget.snr_db,
            "datarate_bit_s": 0.0 if u.budget is None else u.budget.datarate_bit_s,
        } for u in users],
    }
    if full:
        payload["rssi_per_tile"] = {plane: [float(v) for v in grid]
                                    for plane, grid in sorted(snap.rssi_per_tile.items())}
    return payload


def _parse_actions(raw_actions) -> list[Action]:
    if not isinstance(raw_actions, list):
        raise ValueError("actions must be a list")
    actions: list[Action] = []
    for item in raw_actions:
        if not isinstance(item, dict) or "type" not in item:
            raise ValueError("each action needs a 'type' field")
        kind = item["type"]
        if kind == "set_tx_power":
            actions.append(SetTxPower(int(item["bs_id"]), float(item["tx_power_dbm"])))
        elif kind == "set_enabled":
            actions.append(SetEnabled(int(item["bs_id"]), bool(item["enabled"])))
        else:
            raise ValueError(f"unknown action type {kind!r}")
    return actions


class BridgeSession:
    """Dispatches one client's requests to the engine, strictly in order."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.closed = False

    def hello_line(self) -> str:
        return json.dumps({"protocol": PROTOCOL_VERSION}, sort_keys=True)

    def handle_line(self, line: str) -> str:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return self._error("bad_json", f"malformed request: {exc.msg}")
        if not isinstance(request, dict) or "cmd" not in request:
            return self._error("bad_request", "request must be an object with a 'cmd' field")
        cmd = request["cmd"]
        handler = getattr(self, f"_cmd_{cmd}", None)
        if handler is None:
            return self._error("unknown_cmd", f"unknown command {cmd!r}")
        try:
            payload = handler(request)
        except (UnknownEntityError, SimulationError, ValueError) as exc:
            return self._error(type(exc).__name__, str(exc))
        except V2xSimError as exc:
            return self._error("engine_error", str(exc))
        return json.dumps({"ok": True, "payload": payload}, sort_keys=True)

    @staticmethod
    def _error(code: str, message: str) -> str:
        return json.dumps({"ok": False, "error": {"code": code, "message": message}},
                          sort_keys=True)

    # -- commands ------------------------------------------------------------

    def _cmd_reset(self, request: dict) -> dict:
        seed = request.get("seed")
        snap = self.engine.reset(None if seed is None else int(seed))
        return snapshot_payload(snap, full=bool(request.get("full", False)))

    def _cmd_step(self, request: dict) -> dict:
        actions = _parse_actions(request.get("actions", []))
        snap = self.engine.step(actions)
        return snapshot_payload(snap, full=bool(request.get("full", False)))

    def _cmd_get_snapshot(self, request: dict) -> dict:
        return snapshot_payload(self.engine.snapshot, full=bool(request.get("full", False)))

    def _cmd_list_bs(self, request: dict) -> list:
        return self.engine.bs_summaries()

    def _cmd_set_tx_power(self, request: dict) -> dict:
        action = SetTxPower(int(request["bs_id"]), float(request["tx_power_dbm"]))
        self.engine.apply_actions([action])
        bs = self.engine.base_stations[action.bs_id]
        return {"bs_id": bs.bs_id, "tx_power_dbm": bs.tx_power_dbm}

    def _cmd_set_enabled(self, request: dict) -> dict:
        action = SetEnabled(int(request["bs_id"]), bool(request["enabled"]))
        self.engine.apply_actions([action])
        bs = self.engine.base_stations[action.bs_id]
        return {"bs_id": bs.bs_id, "enabled": bs.enabled}

    def _cmd_shutdown(self, request: dict) -> dict:
        self.closed = True
        return {"bye": True}


def serve_stream(engine: Engine, rfile: IO[str], wfile: IO[str]) -> None:
    """Run one session over text streams until shutdown or EOF."""
    session = BridgeSession(engine)
    wfile.write(session.hello_line() + "\n")
    wfile.flush()
    for line in rfile:
        line = line.strip()
        if not line:
            continue
        wfile.write(session.handle_line(line) + "\n")
        wfile.flush()
        if session.closed:
            break


def serve_stdio(engine: Engine) -> None:
    serve_stream(engine, sys.stdin, sys.stdout)


def serve_tcp(engine: Engine, host: str = "127.0.0.1", port: int = 0,
              ready_callback=None) -> None:
    """Accept a single client and serve it until shutdown.

    ``ready_callback(port)`` fires once the socket is listening, which lets
    callers learn an ephemeral port.
    """

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            rfile = self.rfile
            session = BridgeSession(engine)
            self.wfile.write((session.hello_line() + "\n").encode("utf-8"))
            for raw in rfile:
                line = raw.decode("utf-8").strip()
                if not line:
                    continue
                self.wfile.write((session.handle_line(line) + "\n").encode("utf-8"))
                if session.closed:
                    break

    with socketserver.TCPServer((host, port), Handler) as server:
        server.allow_reuse_address = True
        if ready_callback is not None:
            ready_callback(server.server_address[1])
        server.handle_request()
