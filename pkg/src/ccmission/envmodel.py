"""Gridded world: terrain, solar visibility, and the scenario container.

Rasters are stored as flat little-endian float32 files in row-major order
next to a JSON manifest.  Illumination is a stack of frames holding the
visible fraction of the solar disk; between frames the fraction is held
constant, so energy integrals are exact and additive.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .model import (
    Cell,
    FaultParams,
    Haven,
    RoverParams,
    RoverState,
    Waypoint,
)

SOLAR_CONSTANT = 1367.0  # W/m^2, full solar disk
DEFAULT_SLOPE_LIMIT = 20.0  # degrees


class ScenarioError(ValueError):
    """Raised when scenario data is missing, malformed or inconsistent."""


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    """Elevation raster with derived slope and traversability masks.

    ``blocked`` optionally marks hazards (boulder fields, known obstacles)
    that are impassable whatever their slope.
    """

    elevation: np.ndarray
    resolution: float
    slope_limit_deg: float = DEFAULT_SLOPE_LIMIT
    blocked: Optional[np.ndarray] = None
    slope: np.ndarray = field(init=False, repr=False)
    traversable: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        elev = np.asarray(self.elevation, dtype=np.float64)
        if elev.ndim != 2 or min(elev.shape) < 2:
            raise ScenarioError(f"terrain must be a 2-D raster of at least 2x2 cells, got {elev.shape}")
        if not self.resolution > 0:
            raise ScenarioError(f"terrain resolution must be positive, got {self.resolution}")
        if not np.all(np.isfinite(elev)):
            raise ScenarioError("terrain elevation contains non-finite values")
        elev.setflags(write=False)
        # np.gradient: central differences inside, one-sided on the border.
        d_row, d_col = np.gradient(elev, self.resolution)
        slope = np.degrees(np.arctan(np.hypot(d_row, d_col)))
        slope.setflags(write=False)
        trav = slope <= self.slope_limit_deg
        if self.blocked is not None:
            blocked = np.asarray(self.blocked, dtype=bool)
            if blocked.shape != elev.shape:
                raise ScenarioError("blocked mask does not match the elevation raster")
            blocked = blocked.copy()
            blocked.setflags(write=False)
            object.__setattr__(self, "blocked", blocked if blocked.any() else None)
            trav &= ~blocked
        trav.setflags(write=False)
        object.__setattr__(self, "elevation", elev)
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "traversable", trav)

    @property
    def height(self) -> int:
        return self.elevation.shape[0]

    @property
    def width(self) -> int:
        return self.elevation.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.elevation.shape

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_traversable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and bool(self.traversable[cell])


@dataclass(frozen=True, eq=False)
class IlluminationSeries:
    """Hourly (or other uniform cadence) stack of solar-disk visible fractions.

    Frame ``k`` applies on ``[timestamps[k], timestamps[k] + spacing)``; the
    series covers ``[timestamps[0], timestamps[-1] + spacing]``.
    """

    timestamps: np.ndarray
    frames: np.ndarray
    spacing: float = 3600.0
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        frames = np.asarray(self.frames, dtype=np.float64)
        if ts.ndim != 1 or ts.size == 0:
            raise ScenarioError("illumination timestamps must be a non-empty 1-D array")
        if frames.ndim != 3 or frames.shape[0] != ts.size:
            raise ScenarioError(
                f"illumination stack shape {frames.shape} does not match {ts.size} timestamps")
        if not self.spacing > 0:
            raise ScenarioError("illumination frame spacing must be positive")
        if ts.size > 1:
            steps = np.diff(ts)
            if np.any(steps <= 0):
                raise ScenarioError("illumination timestamps must be strictly increasing")
            if not np.allclose(steps, self.spacing, rtol=1e-9, atol=1e-6):
                raise ScenarioError("illumination frames must be uniformly spaced")
        bad = ~((frames >= 0.0) & (frames <= 1.0))
        if bad.any():
            k = int(np.argwhere(bad.any(axis=(1, 2)))[0, 0])
            raise ScenarioError(f"illumination frame {k} has values outside [0, 1]")
        ts.setflags(write=False)
        frames.setflags(write=False)
        # Cumulative visible-fraction-seconds at each frame boundary.
        cum = np.zeros((ts.size + 1,) + frames.shape[1:])
        np.cumsum(frames * self.spacing, axis=0, out=cum[1:])
        cum.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "_cum", cum)

    @property
    def start(self) -> float:
        return float(self.timestamps[0])

    @property
    def end(self) -> float:
        return float(self.timestamps[-1]) + self.spacing

    @property
    def shape(self) -> Tuple[int, int]:
        return self.frames.shape[1:]

    def frame_index(self, t: float) -> int:
        k = int(math.floor((t - self.timestamps[0]) / self.spacing))
        return min(max(k, 0), self.timestamps.size - 1)

    def fraction(self, cell: Cell, t: float) -> float:
        return float(self.frames[self.frame_index(t)][cell])

    def exposure(self, cell: Cell, t: float) -> float:
        """Visible-fraction-seconds accumulated from the series start to ``t``.

        Times outside the coverage are clamped, i.e. no sun is assumed
        before the first frame or after the last one.
        """
        t = min(max(t, self.start), self.end)
        k = self.frame_index(t)
        r, c = cell
        return self._cum[k, r, c] + self.frames[k, r, c] * (t - self.timestamps[k])

    def exposure_batch(self, flat_cells: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`exposure` for flat (row-major) cell indices."""
        t = np.clip(t, self.start, self.end)
        k = np.floor((t - self.timestamps[0]) / self.spacing).astype(np.int64)
        np.clip(k, 0, self.timestamps.size - 1, out=k)
        cum = self._cum.reshape(self._cum.shape[0], -1)
        frames = self.frames.reshape(self.frames.shape[0], -1)
        return cum[k, flat_cells] + frames[k, flat_cells] * (t - self.timestamps[k])


def irradiance_energy(cell: Cell, t0: float, t1: float, illum: IlluminationSeries) -> float:
    """Solar energy per unit area received at ``cell`` over ``[t0, t1]``, in Wh/m^2."""
    tol = 1e-6
    if t1 < t0:
        raise ValueError(f"interval end {t1} precedes start {t0}")
    if t0 < illum.start - tol or t1 > illum.end + tol:
        raise ValueError(
            f"interval [{t0}, {t1}] outside illumination coverage [{illum.start}, {illum.end}]")
    return SOLAR_CONSTANT * (illum.exposure(cell, t1) - illum.exposure(cell, t0)) / 3600.0


def drive_distance(c_from: Cell, c_to: Cell, terrain: TerrainGrid) -> float:
    """3-D distance in metres between the centres of two 8-adjacent cells."""
    dr = c_to[0] - c_from[0]
    dc = c_to[1] - c_from[1]
    if max(abs(dr), abs(dc)) != 1:
        raise ValueError(f"cells {c_from} and {c_to} are not 8-adjacent")
    planar = terrain.resolution * (math.sqrt(2.0) if dr and dc else 1.0)
    dz = terrain.elevation[c_to] - terrain.elevation[c_from]
    return math.hypot(planar, dz)


@dataclass(frozen=True, eq=False)
class Scenario:
    terrain: TerrainGrid
    illum: IlluminationSeries
    waypoints: Tuple[Waypoint, ...]
    havens: Tuple[Haven, ...]
    t_min: float
    t_max: float
    b_min: float
    b_max: float
    rover: RoverParams
    fault: FaultParams
    start: RoverState
    cache: Dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        object.__setattr__(self, "havens", tuple(self.havens))
        self.validate()

    @property
    def n_waypoints(self) -> int:
        return len(self.waypoints)

    def haven_at(self, cell: Cell) -> Optional[Haven]:
        lookup = self.cache.get("haven_lookup")
        if lookup is None:
            lookup = {h.cell: h for h in self.havens}
            self.cache["haven_lookup"] = lookup
        return lookup.get(cell)

    def validate(self) -> None:
        terrain = self.terrain
        if self.illum.shape != terrain.shape:
            raise ScenarioError(
                f"illumination frames {self.illum.shape} do not match terrain {terrain.shape}")
        if not self.t_min < self.t_max:
            raise ScenarioError("operational window requires t_min < t_max")
        if not 0 <= self.b_min < self.b_max:
            raise ScenarioError("energy bounds require 0 <= b_min < b_max")
        if self.rover.capacity > self.b_max:
            raise ScenarioError("battery capacity must not exceed b_max")
        if not self.havens:
            raise ScenarioError("scenario needs at least one safe haven")
        for k, wp in enumerate(self.waypoints):
            if not terrain.is_traversable(wp.cell):
                raise ScenarioError(f"waypoint {k} at {wp.cell} is not traversable")
            if wp.window is not None and not wp.window[0] < wp.window[1]:
                raise ScenarioError(f"waypoint {k} has an empty time window")
        seen = set()
        for h in self.havens:
            if not terrain.is_traversable(h.cell):
                raise ScenarioError(f"haven at {h.cell} is not traversable")
            if h.cell in seen:
                raise ScenarioError(f"duplicate haven at {h.cell}")
            seen.add(h.cell)
            if h.target_energy > self.rover.capacity:
                raise ScenarioError(f"haven at {h.cell} targets more energy than the battery holds")
        horizon = max([self.t_max] + [h.deadline for h in self.havens])
        tol = 1e-6
        if self.illum.start > self.t_min + tol or self.illum.end < horizon - tol:
            raise ScenarioError(
                f"illumination coverage [{self.illum.start}, {self.illum.end}] does not span "
                f"[{self.t_min}, {horizon}]")
        x = self.start
        if not terrain.is_traversable(x.cell):
            raise ScenarioError(f"start cell {x.cell} is not traversable")
        if not (self.t_min <= x.time <= self.t_max and self.b_min <= x.energy <= self.b_max):
            raise ScenarioError("start state lies outside the operational region")
        if not 0 <= x.next_wp <= self.n_waypoints:
            raise ScenarioError("start next_wp out of range")

    # -- serialisation --------------------------------------------------

    def manifest(self, terrain_path: str = "terrain.f32",
                 illum_path: str = "illumination.f32") -> dict:
        return {
            "terrain": {
                "path": terrain_path,
                "height": self.terrain.height,
                "width": self.terrain.width,
                "resolution": self.terrain.resolution,
                "slope_limit_deg": self.terrain.slope_limit_deg,
                "blocked": ([[int(r), int(c)] for r, c in np.argwhere(self.terrain.blocked)]
                            if self.terrain.blocked is not None else []),
            },
            "illumination": {
                "path": illum_path,
                "spacing": self.illum.spacing,
                "timestamps": [float(t) for t in self.illum.timestamps],
            },
            "waypoints": [
                {"cell": list(w.cell), "duration": w.duration, "energy_cost": w.energy_cost,
                 "window": None if w.window is None else list(w.window)}
                for w in self.waypoints
            ],
            "havens": [
                {"cell": list(h.cell), "deadline": h.deadline, "target_energy": h.target_energy}
                for h in self.havens
            ],
            "operational": {"t_min": self.t_min, "t_max": self.t_max,
                            "b_min": self.b_min, "b_max": self.b_max},
            "rover": asdict(self.rover),
            "fault": asdict(self.fault),
            "start": {"cell": list(self.start.cell), "time": self.start.time,
                      "energy": self.start.energy, "next_wp": self.start.next_wp},
        }

    def digest(self) -> str:
        """SHA-256 over the manifest content and raster values."""
        cached = self.cache.get("digest")
        if cached is None:
            h = hashlib.sha256()
            h.update(json.dumps(self.manifest("", ""), sort_keys=True).encode())
            h.update(self.terrain.elevation.astype("<f8").tobytes())
            h.update(self.illum.frames.astype("<f8").tobytes())
            cached = h.hexdigest()
            self.cache["digest"] = cached
        return cached


def _read_raster(path: Path, shape: Sequence[int]) -> np.ndarray:
    if not path.is_file():
        raise ScenarioError(f"raster file not found: {path}")
    data = np.fromfile(path, dtype="<f4")
    expected = int(np.prod(shape))
    if data.size != expected:
        raise ScenarioError(
            f"raster {path.name} holds {data.size} values, expected {expected} for shape {tuple(shape)}")
    return data.reshape(shape).astype(np.float64)


def load_scenario(manifest_path) -> Scenario:
    """Read a JSON manifest and the rasters it references."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ScenarioError(f"manifest not found: {manifest_path}")
    try:
        m = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"manifest is not valid JSON: {exc}") from exc
    missing = {"terrain", "illumination", "waypoints", "havens", "operational",
               "rover", "fault", "start"} - set(m)
    if missing:
        raise ScenarioError(f"manifest lacks keys: {sorted(missing)}")
    base = manifest_path.parent
    try:
        tm = m["terrain"]
        h, w = int(tm["height"]), int(tm["width"])
        blocked = np.zeros((h, w), dtype=bool)
        for r, c in tm.get("blocked", []):
            if not (0 <= r < h and 0 <= c < w):
                raise ScenarioError(f"blocked cell {(r, c)} outside the {h}x{w} grid")
            blocked[r, c] = True
        terrain = TerrainGrid(
            _read_raster(base / tm["path"], (h, w)),
            float(tm["resolution"]),
            float(tm.get("slope_limit_deg", DEFAULT_SLOPE_LIMIT)),
            blocked,
        )
        im = m["illumination"]
        ts = np.asarray(im["timestamps"], dtype=np.float64)
        illum = IlluminationSeries(
            ts, _read_raster(base / im["path"], (ts.size, h, w)), float(im.get("spacing", 3600.0)))
        op = m["operational"]
        st = m["start"]
        return Scenario(
            terrain=terrain,
            illum=illum,
            waypoints=tuple(
                Waypoint(tuple(wp["cell"]), float(wp["duration"]), float(wp["energy_cost"]),
                         None if wp.get("window") is None else tuple(wp["window"]))
                for wp in m["waypoints"]),
            havens=tuple(Haven(tuple(hv["cell"]), float(hv["deadline"]), float(hv["target_energy"]))
                         for hv in m["havens"]),
            t_min=float(op["t_min"]), t_max=float(op["t_max"]),
            b_min=float(op["b_min"]), b_max=float(op["b_max"]),
            rover=RoverParams(**m["rover"]),
            fault=FaultParams(**m["fault"]),
            start=RoverState(tuple(st["cell"]), float(st["time"]), float(st["energy"]),
                             int(st.get("next_wp", 0))),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed manifest entry: {exc!r}") from exc


def save_scenario(scenario: Scenario, directory) -> Path:
    """Write ``manifest.json`` plus float32 rasters into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = scenario.manifest()
    scenario.terrain.elevation.astype("<f4").tofile(directory / manifest["terrain"]["path"])
    scenario.illum.frames.astype("<f4").tofile(directory / manifest["illumination"]["path"])
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path
