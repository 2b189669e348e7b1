"""Rover actions, nominal transitions, energy dynamics and region predicates."""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np

from .envmodel import SOLAR_CONSTANT, Scenario, drive_distance
from .model import (
    DIRECTIONS,
    MOVE,
    SCIENCE,
    WAIT,
    Action,
    Cell,
    FaultParams,
    Haven,
    RoverParams,
    RoverState,
)

__all__ = [
    "Action", "RoverParams", "RoverState", "FaultParams",
    "available_actions", "action_duration", "nominal_transition", "solar_gain",
    "hibernation_outcome", "is_safe", "in_operational", "safe_energy_threshold",
    "SafeSet", "move_table", "ENERGY_EPS",
]

# Slack for energy comparisons so that exact backward inversions are not
# rejected by floating-point round-off.
ENERGY_EPS = 1e-9
TIME_EPS = 1e-6


def solar_gain(cell: Cell, t0: float, t1: float, s: Scenario) -> float:
    """Wh harvested by perfectly pointed panels at ``cell`` over ``[t0, t1]``."""
    illum = s.illum
    k = s.rover.panel_area * s.rover.panel_eff * SOLAR_CONSTANT / 3600.0
    return k * (illum.exposure(cell, t1) - illum.exposure(cell, t0))


def move_table(s: Scenario) -> np.ndarray:
    """Drive distance in metres for every (row, col, direction); ``inf`` when illegal."""
    table = s.cache.get("move_table")
    if table is None:
        terrain = s.terrain
        h, w = terrain.shape
        table = np.full((h, w, 8), np.inf)
        for r in range(h):
            for c in range(w):
                if not terrain.traversable[r, c]:
                    continue
                for d, (dr, dc) in enumerate(DIRECTIONS):
                    nxt = (r + dr, c + dc)
                    if terrain.is_traversable(nxt):
                        table[r, c, d] = drive_distance((r, c), nxt, terrain)
        table.setflags(write=False)
        s.cache["move_table"] = table
    return table


def _science_legal(x: RoverState, k: int, s: Scenario) -> bool:
    if k != x.next_wp or k >= s.n_waypoints:
        return False
    wp = s.waypoints[k]
    if wp.cell != x.cell:
        return False
    if wp.window is not None:
        t_open, t_close = wp.window
        if not (t_open <= x.time <= t_close - wp.duration):
            return False
    return True


def available_actions(x: RoverState, s: Scenario) -> List[Action]:
    """Legal actions from ``x``: moves into traversable cells, wait, and due science."""
    dist = move_table(s)
    r, c = x.cell
    actions = [Action.move(d) for d in range(8) if math.isfinite(dist[r, c, d])]
    actions.append(Action.wait())
    if _science_legal(x, x.next_wp, s):
        actions.append(Action.science(x.next_wp))
    return actions


def action_duration(x: RoverState, a: Action, s: Scenario) -> float:
    if a.kind == MOVE:
        return move_table(s)[x.cell + (a.arg,)] / s.rover.velocity
    if a.kind == WAIT:
        return s.rover.wait_duration if a.duration is None else a.duration
    return s.waypoints[a.arg].duration


def nominal_transition(x: RoverState, a: Action, s: Scenario) -> RoverState:
    """Fault-free successor of ``x`` under ``a``.

    Energy is clamped at battery capacity but not at ``b_min``: dropping below
    the floor is how leaving the operational region shows up.
    """
    rover = s.rover
    cell, t, b = x.cell, x.time, x.energy
    if a.kind == MOVE:
        rho = move_table(s)[cell[0], cell[1], a.arg]
        if not math.isfinite(rho):
            raise ValueError(f"illegal move {a} from {cell}")
        dr, dc = DIRECTIONS[a.arg]
        dest = (cell[0] + dr, cell[1] + dc)
        dt = rho / rover.velocity
        mid = t + 0.5 * dt
        gain = solar_gain(cell, t, mid, s) + solar_gain(dest, mid, t + dt, s)
        energy = min(b + gain - rover.p_drive * dt / 3600.0, rover.capacity)
        return RoverState(dest, t + dt, energy, x.next_wp)
    if a.kind == WAIT:
        dt = rover.wait_duration if a.duration is None else a.duration
        if not dt > 0:
            raise ValueError("wait duration must be positive")
        gain = solar_gain(cell, t, t + dt, s)
        energy = min(b + gain - rover.p_wait * dt / 3600.0, rover.capacity)
        return RoverState(cell, t + dt, energy, x.next_wp)
    if a.kind == SCIENCE:
        if not _science_legal(x, a.arg, s):
            raise ValueError(f"science action {a.arg} not legal from {x}")
        wp = s.waypoints[a.arg]
        gain = solar_gain(cell, t, t + wp.duration, s)
        energy = min(b + gain - wp.energy_cost, rover.capacity)
        return RoverState(cell, t + wp.duration, energy, x.next_wp + 1)
    raise ValueError(f"unknown action kind {a.kind!r}")


def hibernation_outcome(h: Cell, t_arr: float, b_arr: float, s: Scenario) -> Tuple[float, float]:
    """Energy after hibernating at haven ``h`` from ``t_arr`` to its deadline.

    Returns ``(b_final, b_floor)`` where ``b_floor`` is the running minimum.
    Within a frame the net rate is constant, so clamping at capacity is exact
    piece by piece.
    """
    haven = s.haven_at(h)
    if haven is None:
        raise ValueError(f"{h} is not a safe haven")
    if t_arr > haven.deadline:
        raise ValueError(f"arrival {t_arr} is after the haven deadline {haven.deadline}")
    b = b_arr
    floor = b
    for t0, t1 in _pieces(s, t_arr, haven.deadline):
        b = min(b + solar_gain(h, t0, t1, s) - s.rover.p_hibernate * (t1 - t0) / 3600.0,
                s.rover.capacity)
        floor = min(floor, b)
    return b, floor


def _pieces(s: Scenario, t0: float, t1: float):
    """Split ``[t0, t1]`` at illumination frame boundaries."""
    illum = s.illum
    edges = illum.timestamps[(illum.timestamps > t0) & (illum.timestamps < t1)]
    points = [t0] + [float(e) for e in edges] + [t1]
    return [(a, b) for a, b in zip(points[:-1], points[1:]) if b > a]


class SafeSet:
    """Least arrival energy that makes each haven safe, as a function of time.

    Built by inverting the hibernation map backward from each deadline;
    ``threshold`` is ``inf`` when no arrival energy is enough.
    """

    def __init__(self, s: Scenario):
        self.scenario = s
        h, w = s.terrain.shape
        self.width = w
        self.haven_index = np.full(h * w, -1, dtype=np.int64)
        self.deadline = np.array([min(hv.deadline, s.t_max) for hv in s.havens])
        self._breaks = []
        self._req = []
        for i, hv in enumerate(s.havens):
            self.haven_index[hv.cell[0] * w + hv.cell[1]] = i
            breaks, req = self._invert(hv)
            self._breaks.append(breaks)
            self._req.append(req)
        k = s.rover.panel_area * s.rover.panel_eff * SOLAR_CONSTANT / 3600.0
        self._frames = s.illum.frames.reshape(s.illum.frames.shape[0], -1) * k

    def _invert(self, hv: Haven):
        s = self.scenario
        rover = s.rover
        start = max(s.t_min, s.illum.start)
        # Haven deadlines before the window: never safe.
        if hv.deadline < start:
            return np.array([start]), np.array([np.inf])
        pieces = _pieces(s, start, hv.deadline)
        breaks = [hv.deadline]
        req = [max(hv.target_energy, s.b_min)]
        r = req[0]
        for t0, t1 in reversed(pieces):
            delta = solar_gain(hv.cell, t0, t1, s) - rover.p_hibernate * (t1 - t0) / 3600.0
            if r > rover.capacity + ENERGY_EPS:
                r = math.inf
            else:
                r = max(r - delta, s.b_min)
            breaks.append(t0)
            req.append(r)
        return np.array(breaks[::-1]), np.array(req[::-1])

    def threshold(self, cell: Cell, t: float) -> float:
        s = self.scenario
        i = self.haven_index[cell[0] * self.width + cell[1]]
        if i < 0 or t > self.deadline[i] + TIME_EPS or t < s.t_min:
            return math.inf
        breaks = self._breaks[i]
        p = int(np.searchsorted(breaks, t, side="left"))
        if p >= breaks.size:
            p = breaks.size - 1
        if p == 0 or breaks[p] == t:
            return float(self._req[i][p])
        r = float(self._req[i][p])
        if r > s.rover.capacity + ENERGY_EPS:
            return math.inf
        delta = solar_gain(cell, t, float(breaks[p]), s) - s.rover.p_hibernate * (breaks[p] - t) / 3600.0
        return max(r - delta, s.b_min)

    def threshold_batch(self, flat_cells: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`threshold` over flat cell indices and times."""
        s = self.scenario
        out = np.full(np.broadcast(flat_cells, t).shape, np.inf)
        flat_cells, t = np.broadcast_arrays(flat_cells, t)
        hidx = self.haven_index[flat_cells]
        for i in range(len(self._breaks)):
            mask = (hidx == i) & (t <= self.deadline[i] + TIME_EPS) & (t >= s.t_min)
            if not mask.any():
                continue
            tt = t[mask]
            breaks = self._breaks[i]
            req = self._req[i]
            p = np.searchsorted(breaks, tt, side="left")
            np.clip(p, 0, breaks.size - 1, out=p)
            r = req[p]
            tb = breaks[p]
            cells = flat_cells[mask]
            gain = s.rover.panel_area * s.rover.panel_eff * SOLAR_CONSTANT / 3600.0 * (
                s.illum.exposure_batch(cells, tb) - s.illum.exposure_batch(cells, tt))
            delta = gain - s.rover.p_hibernate * (tb - tt) / 3600.0
            val = np.where(r > s.rover.capacity + ENERGY_EPS, np.inf, np.maximum(r - delta, s.b_min))
            exact = (p == 0) | (tb == tt)
            out[mask] = np.where(exact, r, val)
        return out


def safe_set(s: Scenario) -> SafeSet:
    ss = s.cache.get("safe_set")
    if ss is None:
        ss = SafeSet(s)
        s.cache["safe_set"] = ss
    return ss


def safe_energy_threshold(cell: Cell, t: float, s: Scenario) -> float:
    """Minimum energy at ``(cell, t)`` for the state to be safe (``inf`` if none)."""
    return safe_set(s).threshold(cell, t)


def in_operational(x: RoverState, s: Scenario) -> bool:
    return (s.terrain.is_traversable(x.cell)
            and s.t_min <= x.time <= s.t_max
            and s.b_min - ENERGY_EPS <= x.energy <= s.b_max + ENERGY_EPS)


def is_safe(x: RoverState, s: Scenario) -> bool:
    """True iff ``x`` is at a haven from which hibernation meets the haven's target.

    Safe states are required to lie in the operational region as well.
    """
    if s.haven_at(x.cell) is None or not in_operational(x, s):
        return False
    return x.energy >= safe_set(s).threshold(x.cell, x.time) - ENERGY_EPS
