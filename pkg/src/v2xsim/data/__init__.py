"""Bundled mini-city fixtures so every scenario runs offline.

A ~0.31 km^2 synthetic grid city (~240 buildings, 21 streets), a 201-step
trace of 200 vehicles and 200 pedestrians, and a ready-made scenario
configuration. Regenerate with ``scripts/make_bundled_city.py``.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path


def _data_path(name: str) -> Path:
    return Path(resources.files(__package__) / name)


def bundled_map_path() -> Path:
    return _data_path("mini_city.osm")


def bundled_trace_path() -> Path:
    return _data_path("mini_city_fcd.xml.gz")


def bundled_scenario_dict(**overrides) -> dict:
    """The bundled scenario with absolute data paths; overrides merge on top."""
    raw = json.loads(_data_path("mini_city.json").read_text())
    raw["map_path"] = str(bundled_map_path())
    raw["mobility"]["fcd_path"] = str(bundled_trace_path())
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(raw.get(key), dict):
            raw[key] = {**raw[key], **value}
        else:
            raw[key] = value
    return raw


def write_bundled_config(dest_dir: str | Path, filename: str = "scenario.json",
                         **overrides) -> Path:
    """Materialize a runnable config file (cache dir defaults inside dest)."""
    dest_dir = Path(dest_dir)
    dest_dir.mkdir(parents=True, exist_ok=True)
    raw = bundled_scenario_dict(**overrides)
    path = dest_dir / filename
    path.write_text(json.dumps(raw, indent=2) + "\n")
    return path
