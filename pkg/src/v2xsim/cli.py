"""Command-line interface.

Subcommands:
    precache       build (or reuse) the per-plane link caches, print timings
    run            execute a scenario with a built-in policy or the agent bridge
    emit           export plot-ready CSV grids/tables from a finished run
    inspect-cache  verify and describe a cache file
    serve          start the HTTP service wrapping one engine session
    client         thin HTTP client for a running service

Exit codes: 0 ok, 2 configuration error, 3 map/trace data error,
4 cache integrity error. Worker count for pre-computation comes from the
V2XSIM_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import (
    CacheError,
    ConfigError,
    MapDataError,
    TraceDataError,
    V2xSimError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTEGRITY = 4


def _print_json(payload) -> None:
    print(json.dumps(payload, sort_keys=True))


def cmd_precache(args) -> int:
    from .config import load_config
    from .scenario import build_or_load_cache, build_world

    overrides = {}
    if args.tile_size is not None:
        overrides["tile_size_m"] = args.tile_size
    cfg = load_config(args.config, overrides)
    world = build_world(cfg)
    total_records = 0
    for plane in (cfg.macro_plane, cfg.femto_plane):
        table, info = build_or_load_cache(world, plane, force_rebuild=args.force)
        total_records += len(table)
        _print_json({
            "tile_size_m": cfg.tile_size_m,
            "plane": info["plane"],
            "records": info["records"],
            "loaded_from_cache": info["loaded"],
            "precompute_s" if not info["loaded"] else "load_s": round(info["seconds"], 6),
            "path": info["path"],
        })
    _print_json({"tile_size_m": cfg.tile_size_m, "records": total_records,
                 "n_tiles": world.n_tiles, "world_stats": world.stats})
    return EXIT_OK


def cmd_run(args) -> int:
    from .config import load_config
    from .engine import Engine
    from .runio import run_to_directory

    cfg = load_config(args.config, {"horizon_steps": args.horizon,
                                    "policy": args.policy})
    engine = Engine.from_config(cfg)

    if cfg.policy == "bridge":
        from . import bridge
        if args.port is not None:
            print(f"bridge listening on tcp port {args.port}", file=sys.stderr)
            bridge.serve_tcp(engine, port=args.port)
        else:
            bridge.serve_stdio(engine)
        return EXIT_OK

    cache_timings = {
        f"cache_{plane}_{'load' if engine.caches.loaded[plane] else 'precompute'}_s":
            engine.caches.timings[f"{plane}_s"]
        for plane in ("macrocell", "femtocell")
    }
    out_dir = Path(args.out)
    summary = run_to_directory(engine, cfg.policy, out_dir, seed=args.seed,
                               timings=cache_timings)
    _print_json({"out_dir": str(out_dir), **summary.totals()})
    return EXIT_OK


def cmd_emit(args) -> int:
    from .runio import EMITTERS

    emitter = EMITTERS[args.what]
    result = emitter(Path(args.run), args.step)
    for path in result.files:
        print(str(path))
    return EXIT_OK


def cmd_inspect_cache(args) -> int:
    from .linkcache import RECORD_DTYPE, read_header

    header = read_header(args.path)
    _print_json({
        "path": args.path,
        "format_version": header.format_version,
        "map_digest": header.map_digest.hex(),
        "geometry_config_digest": header.geometry_config_digest.hex(),
        "plane_config_digest": header.plane_config_digest.hex(),
        "tile_size_m": header.tile_size_m,
        "record_count": header.record_count,
        "record_bytes": RECORD_DTYPE.itemsize,
        "checksum": "ok",
    })
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .config import load_config
    from .engine import Engine
    from .service import create_app

    cfg = load_config(args.config, {"horizon_steps": args.horizon})
    engine = Engine.from_config(cfg)
    app = create_app(engine)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_client(args) -> int:
    import httpx

    base = args.url.rstrip("/")
    with httpx.Client(base_url=base, timeout=60.0) as client:
        if args.client_cmd == "snapshot":
            response = client.get("/snapshot", params={"full": args.full})
        elif args.client_cmd == "list-bs":
            response = client.get("/bs")
        elif args.client_cmd == "reset":
            response = client.post("/reset", json={"seed": args.seed, "full": args.full})
        elif args.client_cmd == "step":
            actions = json.loads(args.actions) if args.actions else []
            response = client.post("/step", json={"actions": actions, "full": args.full})
        else:
            raise ConfigError(f"unknown client command {args.client_cmd!r}")
    print(json.dumps(response.json(), sort_keys=True))
    return EXIT_OK if response.status_code == 200 else EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2xsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precache", help="build or reuse the link caches")
    p.add_argument("--config", required=True)
    p.add_argument("--tile-size", type=float, default=None,
                   help="override tile_size_m from the config")
    p.add_argument("--force", action="store_true", help="rebuild even if digests match")
    p.set_defaults(func=cmd_precache)

    p = sub.add_parser("run", help="execute a scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--policy", default=None,
                   choices=["static-median", "adaptive-density", "bridge"],
                   help="override the config's policy selector")
    p.add_argument("--out", default="run_out")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--port", type=int, default=None,
                   help="bridge policy: serve on this TCP port instead of stdio")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("emit", help="export CSVs from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--what", required=True, choices=["rssi-heatmap", "density", "datarate"])
    p.add_argument("--step", type=int, required=True)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("inspect-cache", help="verify and describe a cache file")
    p.add_argument("--path", required=True)
    p.set_defaults(func=cmd_inspect_cache)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8123)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("client", help="thin client for a running service")
    p.add_argument("client_cmd", choices=["snapshot", "list-bs", "reset", "step"])
    p.add_argument("--url", default="http://127.0.0.1:8123")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--full", action="store_true")
    p.add_argument("--actions", default=None,
                   help="JSON list of actions for 'step'")
    p.set_defaults(func=cmd_client)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MapDataError, TraceDataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CacheError as exc:
        print(f"cache error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except V2xSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
