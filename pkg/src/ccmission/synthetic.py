"""Synthetic polar crater scenarios.

Terrain is a paraboloid bowl with a Gaussian rim and a few hills on a gently
noisy plain.  Shadows come from a horizon ray-cast along the sun azimuth at a
low, constant sun elevation; the azimuth sweeps round once per synodic
period.  The visible fraction of the solar disk is the portion of the disk
above the local horizon, treating the disk as a vertical band of height
``2 * sun_radius``.

Rasters are quantised to float32 at generation time, so a scenario written to
disk and read back has the same digest as the one in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from .envmodel import IlluminationSeries, Scenario, ScenarioError, TerrainGrid
from .model import Cell, FaultParams, Haven, RoverParams, RoverState, Waypoint

# Mission window of the medium-scale case study (2029-08-30 12:33 UTC, 82 h).
MISSION_T_MIN = 1882787600.0
MISSION_T_MAX = 1883082800.0

DEFAULT_ACTIONS = ((7200.0, 2000.0), (7200.0, 2000.0), (10800.0, 3000.0),
                   (7200.0, 1500.0), (7200.0, 1000.0))


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic crater scenario.

    Lengths in cells unless noted.  ``waypoints``/``havens``/``start`` give
    explicit placements; when omitted they are chosen from the generated
    illumination (brightest cells for havens, shadowed rim-adjacent cells for
    waypoints).
    """

    size: int = 32
    resolution: float = 240.0
    crater_center: Tuple[float, float] = (16.0, 16.0)
    crater_radius: float = 9.0
    crater_depth: float = 350.0          # m
    rim_height: float = 40.0             # m
    rim_width: float = 2.0
    n_hills: int = 6
    hill_height: float = 150.0           # m
    hill_sigma: float = 2.0
    noise: float = 2.0                   # m, std of per-cell jitter
    slope_limit_deg: float = 20.0
    sun_elevation_deg: float = 2.0
    sun_radius_deg: float = 0.27
    sun_azimuth0_deg: float = 0.0        # azimuth at t_min, clockwise from north
    sun_period: float = 29.53 * 86400.0
    observer_height: float = 2.0         # m
    t_min: float = MISSION_T_MIN
    t_max: float = MISSION_T_MAX
    frame_spacing: float = 3600.0
    b_min: float = 500.0
    b_max: float = 7000.0
    start_energy: float = 1000.0
    haven_target: float = 2000.0
    n_waypoints: int = 3
    n_havens: int = 3
    waypoints: Optional[Tuple[Cell, ...]] = None
    waypoint_actions: Tuple[Tuple[float, float], ...] = DEFAULT_ACTIONS
    havens: Optional[Tuple[Cell, ...]] = None
    start: Optional[Cell] = None
    blocked: Tuple[Cell, ...] = ()     # cells marked impassable regardless of slope
    rover: RoverParams = field(default_factory=RoverParams)
    fault: FaultParams = field(default_factory=FaultParams)

    def validate(self) -> None:
        if self.size < 4:
            raise ScenarioError("synthetic grid must be at least 4x4")
        r0, c0 = self.crater_center
        if (self.crater_radius + self.rim_width > min(r0, c0, self.size - 1 - r0, self.size - 1 - c0)
                or self.crater_radius <= 0):
            raise ScenarioError("crater does not fit inside the grid")
        if not 0 < self.sun_elevation_deg < 90:
            raise ScenarioError("sun elevation must lie in (0, 90) degrees")
        if self.havens is not None and len(self.havens) == 0:
            raise ScenarioError("scenario needs at least one safe haven")
        if self.havens is None and self.n_havens < 1:
            raise ScenarioError("scenario needs at least one safe haven")


def crater_terrain(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.size
    rows, cols = np.mgrid[0:n, 0:n].astype(np.float64)
    r0, c0 = spec.crater_center
    dist = np.hypot(rows - r0, cols - c0)
    R = spec.crater_radius
    bowl = np.where(dist < R, spec.crater_depth * ((dist / R) ** 2 - 1.0), 0.0)
    rim = spec.rim_height * np.exp(-0.5 * ((dist - R) / spec.rim_width) ** 2)
    elev = bowl + rim
    placed = 0
    while placed < spec.n_hills:
        hr, hc = rng.uniform(0, n - 1, size=2)
        if math.hypot(hr - r0, hc - c0) < R + 3 * spec.hill_sigma:
            continue
        elev += spec.hill_height * np.exp(
            -0.5 * ((rows - hr) ** 2 + (cols - hc) ** 2) / spec.hill_sigma ** 2)
        placed += 1
    elev += rng.normal(0.0, spec.noise, size=elev.shape)
    return elev.astype(np.float32).astype(np.float64)


def sun_azimuth(spec: SynthSpec, t: float) -> float:
    """Sun azimuth in radians, clockwise from north."""
    return math.radians(spec.sun_azimuth0_deg) + 2.0 * math.pi * (t - spec.t_min) / spec.sun_period


def horizon_angle(elev: np.ndarray, resolution: float, azimuth: float,
                  observer_height: float, step: float = 0.5) -> np.ndarray:
    """Horizon elevation angle (radians) from every cell toward ``azimuth``.

    Marches straight lines in ``step``-cell increments, sampling the terrain
    bilinearly, until the ray leaves the grid.  Off-grid terrain is ignored.
    """
    n_r, n_c = elev.shape
    # Row index grows southward, so north is -row.
    d_row = -math.cos(azimuth)
    d_col = math.sin(azimuth)
    rows, cols = np.mgrid[0:n_r, 0:n_c].astype(np.float64)
    base = elev + observer_height
    best = np.full(elev.shape, -np.pi / 2)
    n_steps = int(math.ceil(math.hypot(n_r, n_c) / step))
    for k in range(1, n_steps + 1):
        rr = rows + d_row * step * k
        cc = cols + d_col * step * k
        inside = (rr >= 0) & (rr <= n_r - 1) & (cc >= 0) & (cc <= n_c - 1)
        if not inside.any():
            break
        z = map_coordinates(elev, [rr[inside], cc[inside]], order=1)
        ang = np.arctan2(z - base[inside], step * k * resolution)
        best[inside] = np.maximum(best[inside], ang)
    return best


def visible_fraction(horizon: np.ndarray, sun_elevation: float, sun_radius: float) -> np.ndarray:
    return np.clip((sun_elevation - horizon) / (2.0 * sun_radius) + 0.5, 0.0, 1.0)


def illumination_stack(elev: np.ndarray, spec: SynthSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Timestamps and visible-fraction frames covering the mission window."""
    n_frames = int(math.ceil((spec.t_max - spec.t_min) / spec.frame_spacing))
    ts = spec.t_min + spec.frame_spacing * np.arange(n_frames)
    elev_rad = math.radians(spec.sun_elevation_deg)
    rad = math.radians(spec.sun_radius_deg)
    frames = np.empty((n_frames,) + elev.shape)
    for k, t in enumerate(ts):
        # Sun direction sampled at mid-frame.
        az = sun_azimuth(spec, float(t) + 0.5 * spec.frame_spacing)
        frames[k] = visible_fraction(
            horizon_angle(elev, spec.resolution, az, spec.observer_height), elev_rad, rad)
    return ts, frames.astype(np.float32).astype(np.float64)


def psr_mask(frames: np.ndarray) -> np.ndarray:
    """Cells with zero visible fraction at every timestamp."""
    return np.all(frames == 0.0, axis=0)


def _spaced_pick(order: Sequence[int], width: int, count: int, min_sep: float,
                 taken: Sequence[Cell] = ()) -> list:
    picked = []
    for flat in order:
        cell = (int(flat // width), int(flat % width))
        if all(math.hypot(cell[0] - o[0], cell[1] - o[1]) >= min_sep
               for o in list(taken) + picked):
            picked.append(cell)
            if len(picked) == count:
                break
    return picked


def _auto_placements(terrain: TerrainGrid, frames: np.ndarray, spec: SynthSpec):
    w = terrain.width
    trav = terrain.traversable.ravel()
    mean_sun = frames.mean(axis=0).ravel()
    order = [int(i) for i in np.lexsort((np.arange(mean_sun.size), -mean_sun)) if trav[i]]
    havens = tuple(_spaced_pick(order, w, spec.n_havens, 6.0))
    if len(havens) < spec.n_havens:
        raise ScenarioError("could not place the requested number of havens")
    # Waypoints: dark traversable cells near the crater wall, ordered by bearing.
    r0, c0 = spec.crater_center
    rows, cols = np.divmod(np.arange(mean_sun.size), w)
    dist = np.hypot(rows - r0, cols - c0)
    band = trav & (mean_sun < 0.05) & (dist > 0.45 * spec.crater_radius) & (dist < spec.crater_radius)
    cand = [int(i) for i in np.nonzero(band)[0]]
    cand.sort(key=lambda i: (math.atan2(cols[i] - c0, -(rows[i] - r0)), i))
    stride = max(len(cand) // max(spec.n_waypoints, 1), 1)
    waypoints = tuple((int(rows[i]), int(cols[i])) for i in cand[::stride][:spec.n_waypoints])
    if len(waypoints) < spec.n_waypoints:
        raise ScenarioError("could not place the requested number of waypoints")
    return waypoints, havens, havens[0]


def generate_synthetic(spec: SynthSpec = SynthSpec(), seed: int = 0) -> Scenario:
    """Build a deterministic synthetic crater scenario."""
    spec.validate()
    rng = np.random.default_rng(seed)
    elev = crater_terrain(spec, rng)
    mask = None
    if spec.blocked:
        mask = np.zeros(elev.shape, dtype=bool)
        for r, c in spec.blocked:
            mask[r, c] = True
    terrain = TerrainGrid(elev, spec.resolution, spec.slope_limit_deg, mask)
    ts, frames = illumination_stack(elev, spec)
    illum = IlluminationSeries(ts, frames, spec.frame_spacing)
    waypoints, havens, start = _auto_placements(terrain, frames, spec)
    if spec.waypoints is not None:
        waypoints = tuple(spec.waypoints)
    if spec.havens is not None:
        havens = tuple(spec.havens)
    if spec.start is not None:
        start = spec.start
    actions = spec.waypoint_actions
    wps = tuple(Waypoint(c, *actions[k % len(actions)]) for k, c in enumerate(waypoints))
    hvs = tuple(Haven(c, spec.t_max, spec.haven_target) for c in havens)
    return Scenario(
        terrain=terrain, illum=illum, waypoints=wps, havens=hvs,
        t_min=spec.t_min, t_max=spec.t_max, b_min=spec.b_min, b_max=spec.b_max,
        rover=spec.rover, fault=spec.fault,
        start=RoverState(start, spec.t_min, spec.start_energy, 0),
    )


# Named scenarios shipped with the package.
MEDIUM_WAYPOINTS = ((10, 9), (14, 8), (20, 10), (22, 16), (21, 22))
MEDIUM_HAVENS = ((6, 12), (24, 6), (25, 20))
ISLAND_CELL = (28, 28)

PRESETS = {
    "medium": SynthSpec(waypoints=MEDIUM_WAYPOINTS, havens=MEDIUM_HAVENS, start=(6, 12),
                        n_waypoints=len(MEDIUM_WAYPOINTS)),
    # The medium scenario plus a sixth waypoint walled in by blocked cells.
    "island": SynthSpec(waypoints=MEDIUM_WAYPOINTS + (ISLAND_CELL,), havens=MEDIUM_HAVENS,
                        start=(6, 12), n_waypoints=len(MEDIUM_WAYPOINTS) + 1,
                        blocked=tuple((r, c) for r in range(ISLAND_CELL[0] - 2, ISLAND_CELL[0] + 3)
                                      for c in range(ISLAND_CELL[1] - 2, ISLAND_CELL[1] + 3)
                                      if max(abs(r - ISLAND_CELL[0]), abs(c - ISLAND_CELL[1])) == 2)),
    "default": SynthSpec(),
}
