"""Per-step user positions.

Three sources: playback of recorded floating-car-data traces (vehicles and
pedestrians), a seeded random-waypoint generator for tests, and
Weibull-sampled indoor users pinned to building incenters. All providers
are deterministic for a fixed seed and satisfy the same contract:
``advance(t)`` returns the full outdoor user set at time ``t``.
"""

from __future__ import annotations

import gzip
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from io import BytesIO
from pathlib import Path
from typing import Protocol

from .errors import TraceDataError
from .geometry import Point2D, project_to_local
from .rng import generator
from .world import BBox, TileGrid


class UserKind(Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    INDOOR = "indoor"


@dataclass(frozen=True)
class UserPosition:
    user_id: str
    kind: UserKind
    position: Point2D
    tile_id: int


@dataclass(frozen=True)
class TraceEntity:
    entity_id: str
    kind: UserKind
    x: float
    y: float


@dataclass
class FcdTrace:
    times: list[float]
    steps: list[list[TraceEntity]]
    step_length_s: float
    skipped_elements: int

    @property
    def horizon_s(self) -> float:
        return self.times[-1] if self.times else 0.0


class MobilityProvider(Protocol):
    """Contract every outdoor mobility source satisfies."""

    step_length_s: float
    horizon_s: float

    def advance(self, t: float) -> list[UserPosition]: ...

    def reset(self) -> None: ...


# --------------------------------------------------------------------------
# Floating-car-data playback
# --------------------------------------------------------------------------

def _open_fcd_bytes(source: bytes | str | Path) -> bytes:
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = source
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def parse_fcd(source: bytes | str | Path, geo: bool = False,
              origin: tuple[float, float] | None = None) -> FcdTrace:
    """Parse a floating-car-data XML export (timestep/vehicle/person).

    Coordinates are taken in the map's local frame unless ``geo`` is True,
    in which case x/y hold lon/lat and are projected about ``origin``.
    Timesteps must be strictly increasing and uniformly spaced; elements
    missing id/x/y are skipped and counted.
    """
    if geo and origin is None:
        raise TraceDataError("geo coordinates need a projection origin")
    data = _open_fcd_bytes(source)
    times: list[float] = []
    steps: list[list[TraceEntity]] = []
    skipped = 0
    try:
        for _, el in ET.iterparse(BytesIO(data), events=("end",)):
            if el.tag == "timestep":
                t_attr = el.get("time")
                if t_attr is None:
                    raise TraceDataError("timestep element missing time attribute")
                t = float(t_attr)
                if times and t <= times[-1]:
                    raise TraceDataError(
                        f"timesteps out of order: {t} after {times[-1]}")
                entities = []
                for child in el:
                    if child.tag == "vehicle":
                        kind = UserKind.VEHICLE
                    elif child.tag == "person":
                        kind = UserKind.PEDESTRIAN
                    else:
                        continue
                    ent_id = child.get("id")
                    x_attr, y_attr = child.get("x"), child.get("y")
                    if ent_id is None or x_attr is None or y_attr is None:
                        skipped += 1
                        continue
                    x, y = float(x_attr), float(y_attr)
                    if geo:
                        p = project_to_local(y, x, origin[0], origin[1])
                        x, y = p.x, p.y
                    entities.append(TraceEntity(ent_id, kind, x, y))
                times.append(t)
                steps.append(entities)
                el.clear()
    except ET.ParseError as exc:
        line, col = exc.position
        raise TraceDataError(f"malformed FCD XML at line {line}, column {col}: {exc.msg}") from exc
    if not times:
        raise TraceDataError("trace contains no timesteps")
    if len(times) == 1:
        step_length = 1.0
    else:
        diffs = [b - a for a, b in zip(times, times[1:])]
        step_length = diffs[0]
        if any(abs(d - step_length) > 1e-9 for d in diffs):
            raise TraceDataError("timesteps are not uniformly spaced")
    return FcdTrace(times=times, steps=steps, step_length_s=step_length,
                    skipped_elements=skipped)


class TracePlayback:
    """Replays a parsed trace, snapping every entity to its nearest tile."""

    def __init__(self, trace: FcdTrace, grid: TileGrid, bbox: BBox):
        self.trace = trace
        self.grid = grid
        self.bbox = bbox
        self.step_length_s = trace.step_length_s
        self.horizon_s = trace.horizon_s
        self.dropped_outside = 0

    def reset(self) -> None:
        self.dropped_outside = 0

    def _step_index(self, t: float) -> int:
        ratio = t / self.step_length_s
        idx = round(ratio)
        if abs(ratio - idx) > 1e-9:
            raise TraceDataError(
                f"time {t} is not a multiple of the step length {self.step_length_s}")
        if not (0 <= idx < len(self.trace.times)):
            raise TraceDataError(f"time {t} outside the trace horizon {self.horizon_s}")
        return idx

    def advance(self, t: float) -> list[UserPosition]:
        idx = self._step_index(t)
        users = []
        for ent in self.trace.steps[idx]:
            p = Point2D(ent.x, ent.y)
            if not self.bbox.contains(p):
                self.dropped_outside += 1
                continue
            users.append(UserPosition(user_id=ent.entity_id, kind=ent.kind,
                                      position=p, tile_id=self.grid.nearest_tile(p)))
        return users


# --------------------------------------------------------------------------
# Synthetic random-waypoint provider
# --------------------------------------------------------------------------

@dataclass
class _Walker:
    user_id: str
    kind: UserKind
    x: float
    y: float
    tx: float
    ty: float
    speed: float


class SyntheticWaypointProvider:
    """Seeded random-waypoint motion inside the bbox, for tests and demos."""

    def __init__(self, n_vehicles: int, n_pedestrians: int, bbox: BBox, grid: TileGrid,
                 seed: int, step_length_s: float = 1.0, horizon_s: float = math.inf,
                 vehicle_speed_ms: tuple[float, float] = (3.0, 14.0),
                 pedestrian_speed_ms: tuple[float, float] = (0.5, 2.0)):
        if n_vehicles < 0 or n_pedestrians < 0:
            raise TraceDataError("user counts must be >= 0")
        self.bbox = bbox
        self.grid = grid
        self.seed = seed
        self.step_length_s = step_length_s
        self.horizon_s = horizon_s
        self.n_vehicles = n_vehicles
        self.n_pedestrians = n_pedestrians
        self.vehicle_speed_ms = vehicle_speed_ms
        self.pedestrian_speed_ms = pedestrian_speed_ms
        self._memo: list[list[UserPosition]] = []
        self.reset()

    def reset(self) -> None:
        self._walkers: list[_Walker] = []
        self._memo = []
        for kind, count, speeds, prefix in (
            (UserKind.VEHICLE, self.n_vehicles, self.vehicle_speed_ms, "veh"),
            (UserKind.PEDESTRIAN, self.n_pedestrians, self.pedestrian_speed_ms, "ped"),
        ):
            for i in range(count):
                gen = generator(self.seed, "waypoint", prefix, i)
                x = float(gen.uniform(self.bbox.min_x, self.bbox.max_x))
                y = float(gen.uniform(self.bbox.min_y, self.bbox.max_y))
                tx = float(gen.uniform(self.bbox.min_x, self.bbox.max_x))
                ty = float(gen.uniform(self.bbox.min_y, self.bbox.max_y))
                speed = float(gen.uniform(*speeds))
                self._walkers.append(_Walker(f"{prefix}{i}", kind, x, y, tx, ty, speed))
        self._memo.append(self._snapshot())

    def _snapshot(self) -> list[UserPosition]:
        return [UserPosition(w.user_id, w.kind, Point2D(w.x, w.y),
                             self.grid.nearest_tile(Point2D(w.x, w.y)))
                for w in self._walkers]

    def _step_once(self, step_index: int) -> None:
        for w in self._walkers:
            budget = w.speed * self.step_length_s
            while budget > 0.0:
                dx, dy = w.tx - w.x, w.ty - w.y
                dist = math.hypot(dx, dy)
                if dist <= budget:
                    w.x, w.y = w.tx, w.ty
                    budget -= dist
                    gen = generator(self.seed, "retarget", w.user_id, step_index)
                    w.tx = float(gen.uniform(self.bbox.min_x, self.bbox.max_x))
                    w.ty = float(gen.uniform(self.bbox.min_y, self.bbox.max_y))
                    if w.tx == w.x and w.ty == w.y:
                        break
                else:
                    w.x += dx / dist * budget
                    w.y += dy / dist * budget
                    budget = 0.0
        self._memo.append(self._snapshot())

    def advance(self, t: float) -> list[UserPosition]:
        ratio = t / self.step_length_s
        idx = round(ratio)
        if abs(ratio - idx) > 1e-9 or idx < 0:
            raise TraceDataError(f"time {t} is not a multiple of {self.step_length_s}")
        if t > self.horizon_s:
            raise TraceDataError(f"time {t} past the horizon {self.horizon_s}")
        while len(self._memo) <= idx:
            self._step_once(len(self._memo))
        return self._memo[idx]


# --------------------------------------------------------------------------
# Indoor population
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IndoorPopulation:
    epoch: int
    counts: dict[str, int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.counts.values())


def sample_indoor(building_ids: list[str], shape_k: float, scale_lambda: float,
                  cap: int, seed: int, epoch: int) -> IndoorPopulation:
    """Weibull-distributed indoor user counts per building.

    Each building's count is min(cap, round(w)) with w ~ Weibull(k, lambda),
    drawn from a stream keyed by (seed, building id, epoch): identical
    inputs reproduce identical counts, and counts are frozen within an
    epoch.
    """
    if shape_k <= 0 or scale_lambda <= 0:
        raise TraceDataError("Weibull parameters must be positive")
    if cap < 0:
        raise TraceDataError("indoor cap must be >= 0")
    counts = {}
    for bid in building_ids:
        w = scale_lambda * float(generator(seed, "indoor", bid, epoch).weibull(shape_k))
        counts[bid] = min(cap, round(w))
    return IndoorPopulation(epoch=epoch, counts=counts)
