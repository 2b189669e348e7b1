"""Safe-recovery value function and greedy policy on a discretised state lattice.

The lattice spans cells x time points x energy points over the operational
region.  A continuous state maps to the lattice conservatively: time rounds
up to the next time point, energy rounds down to the energy point below.
Bellman backups are evaluated from that corner, and since every action takes
strictly positive time, one backward sweep over time layers is exact.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .envmodel import SOLAR_CONSTANT, Scenario
from .model import DIRECTIONS, HALT_CODE, WAIT_CODE, Action, RoverState, action_from_code
from .roverdyn import ENERGY_EPS, move_table, safe_set

SAFE = "SAFE"
FAIL = "FAIL"

_ROUND_TOL = 1e-9
_MAGIC = b"CCRECOV1"


class LatticeError(ValueError):
    """Raised for lattices that cannot support an exact backward sweep."""


@dataclass(frozen=True)
class StateLattice:
    t_min: float
    t_max: float
    b_min: float
    b_max: float
    time_res: float
    energy_res: float
    height: int
    width: int

    def __post_init__(self):
        if not (self.time_res > 0 and self.energy_res > 0):
            raise LatticeError("lattice resolutions must be positive")
        if self.n_time < 2 or self.n_energy < 2:
            raise LatticeError(
                f"lattice needs at least 2 points per axis, got {self.n_time} x {self.n_energy}")

    @classmethod
    def for_scenario(cls, s: Scenario, time_res: float = 1800.0,
                     energy_res: float = 150.0) -> "StateLattice":
        h, w = s.terrain.shape
        return cls(s.t_min, s.t_max, s.b_min, s.b_max, float(time_res), float(energy_res), h, w)

    @property
    def n_time(self) -> int:
        return int(math.ceil((self.t_max - self.t_min) / self.time_res - _ROUND_TOL)) + 1

    @property
    def n_energy(self) -> int:
        return int(math.floor((self.b_max - self.b_min) / self.energy_res + _ROUND_TOL)) + 1

    @property
    def n_cells(self) -> int:
        return self.height * self.width

    @property
    def size(self) -> int:
        return self.n_time * self.n_cells * self.n_energy

    @property
    def time_points(self) -> np.ndarray:
        return np.minimum(self.t_min + np.arange(self.n_time) * self.time_res, self.t_max)

    @property
    def energy_points(self) -> np.ndarray:
        return self.b_min + np.arange(self.n_energy) * self.energy_res

    def time_index(self, t: float) -> int:
        """Index of the first time point at or after ``t``."""
        return min(max(math.ceil((t - self.t_min) / self.time_res - _ROUND_TOL), 0), self.n_time - 1)

    def energy_index(self, b: float) -> int:
        """Index of the last energy point at or below ``b``."""
        return min(max(math.floor((b - self.b_min) / self.energy_res + _ROUND_TOL), 0),
                   self.n_energy - 1)


def check_lattice(s: Scenario, lat: StateLattice) -> None:
    """Reject lattices whose time step exceeds the shortest recovery action."""
    if (lat.height, lat.width) != s.terrain.shape:
        raise LatticeError("lattice grid does not match the scenario terrain")
    dist = move_table(s)
    finite = dist[np.isfinite(dist)]
    shortest = s.rover.wait_duration
    if finite.size:
        shortest = min(shortest, float(finite.min()) / s.rover.velocity)
    if lat.time_res > shortest + 1e-9:
        raise LatticeError(
            f"time resolution {lat.time_res:g} s exceeds the shortest action duration "
            f"{shortest:g} s; use --time-res <= {shortest:g}")


LatticePoint = Tuple[int, int, int, int]  # (row, col, time index, energy index)


def conservative_index(x: RoverState, lat: StateLattice, s: Scenario) -> Union[str, LatticePoint]:
    """Map a continuous state to ``SAFE``, ``FAIL`` or a lattice point."""
    return _index(x.cell, x.time, x.energy, lat, s)


def _index(cell, t, b, lat: StateLattice, s: Scenario):
    r, c = cell
    if not (0 <= r < lat.height and 0 <= c < lat.width) or not s.terrain.traversable[r, c]:
        return FAIL
    if t < s.t_min or t > s.t_max or b < s.b_min - ENERGY_EPS or b > s.b_max + ENERGY_EPS:
        return FAIL
    if s.haven_at(cell) is not None and b >= safe_set(s).threshold(cell, t) - ENERGY_EPS:
        return SAFE
    return (r, c, lat.time_index(t), lat.energy_index(b))


@dataclass(eq=False)
class RecoveryPolicy:
    lattice: StateLattice
    values: np.ndarray      # (n_time, n_cells, n_energy) reach-S probability
    actions: np.ndarray     # same shape, int8 action codes, -1 = halt
    scenario: Scenario
    scenario_hash: str
    sweeps: int = 1

    def index(self, x: RoverState):
        return _index(x.cell, x.time, x.energy, self.lattice, self.scenario)

    def value_at(self, cell, t: float, b: float) -> float:
        idx = _index(cell, t, b, self.lattice, self.scenario)
        if idx is SAFE:
            return 1.0
        if idx is FAIL:
            return 0.0
        r, c, i, j = idx
        return float(self.values[i, r * self.lattice.width + c, j])

    def value(self, x: RoverState) -> float:
        return self.value_at(x.cell, x.time, x.energy)

    def risk_at(self, cell, t: float, b: float) -> float:
        return 1.0 - self.value_at(cell, t, b)

    def risk(self, x: RoverState) -> float:
        return 1.0 - self.value_at(x.cell, x.time, x.energy)

    def greedy_action(self, x: RoverState) -> Optional[Action]:
        idx = self.index(x)
        if idx is SAFE or idx is FAIL:
            return None
        r, c, i, j = idx
        code = int(self.actions[i, r * self.lattice.width + c, j])
        return None if code == HALT_CODE else action_from_code(code)


def risk(x: RoverState, pol: RecoveryPolicy) -> float:
    """Probability of failing to reach safety under the recovery policy (1 - V)."""
    return pol.risk(x)


def greedy_action(x: RoverState, pol: RecoveryPolicy) -> Optional[Action]:
    """Stored argmax action at the state's lattice point; ``None`` means halt."""
    return pol.greedy_action(x)


class _LayerLookup:
    """Vectorised value lookup of continuous outcome states."""

    def __init__(self, s: Scenario, lat: StateLattice, values: np.ndarray):
        self.s = s
        self.lat = lat
        self.values = values
        self.safe = safe_set(s)

    def __call__(self, cells: np.ndarray, t: np.ndarray, b: np.ndarray) -> np.ndarray:
        s, lat = self.s, self.lat
        thr = self.safe.threshold_batch(cells, t)
        late = t > s.t_max
        i = np.ceil((t - lat.t_min) / lat.time_res - _ROUND_TOL).astype(np.int64)
        np.clip(i, 0, lat.n_time - 1, out=i)
        j = np.floor((b - lat.b_min) / lat.energy_res + _ROUND_TOL).astype(np.int64)
        np.clip(j, 0, lat.n_energy - 1, out=j)
        val = self.values[i[:, None], cells[:, None], j]
        val = np.where(b >= thr[:, None] - ENERGY_EPS, 1.0, val)
        val = np.where(b < s.b_min - ENERGY_EPS, 0.0, val)
        val[late] = 0.0
        return val


def _sweep(s: Scenario, lat: StateLattice, values: np.ndarray, actions: np.ndarray) -> float:
    """One backward pass over all time layers; returns the largest value change."""
    rover = s.rover
    h, w = s.terrain.shape
    n = h * w
    kgain = rover.panel_area * rover.panel_eff * SOLAR_CONSTANT / 3600.0
    expo = s.illum.exposure_batch
    trav = s.terrain.traversable.ravel()
    cells = np.arange(n)
    dist = move_table(s).reshape(n, 8)
    bpts = lat.energy_points[None, :]
    cap = rover.capacity
    alpha = s.fault.rate
    dtf = s.fault.recovery_duration
    fault_cost = rover.p_fault * dtf / 3600.0
    lookup = _LayerLookup(s, lat, values)
    safe = safe_set(s)
    change = 0.0
    for i in range(lat.n_time - 1, -1, -1):
        t = float(lat.time_points[i])
        q = np.full((9, n, lat.n_energy), -1.0)
        for d, (dr, dc) in enumerate(DIRECTIONS):
            c = np.nonzero(np.isfinite(dist[:, d]))[0]
            if c.size == 0:
                continue
            c2 = c + dr * w + dc
            rho = dist[c, d]
            dt = rho / rover.velocity
            mid = t + 0.5 * dt
            t2 = t + dt
            tv = np.full(c.size, t)
            gain = kgain * (expo(c, mid) - expo(c, tv)) + kgain * (expo(c2, t2) - expo(c2, mid))
            bn = np.minimum(bpts + gain[:, None] - (rover.p_drive * dt / 3600.0)[:, None], cap)
            vn = lookup(c2, t2, bn)
            if alpha > 0.0:
                half = -0.5 * alpha * rho
                p_h1 = -np.expm1(half)
                p_h2 = np.exp(half) * p_h1
                p_nom = np.exp(2.0 * half)
                tf = tv + dtf
                g1 = kgain * (expo(c, tf) - expo(c, tv))
                b1 = np.minimum(bpts + g1[:, None] - fault_cost, cap)
                v1 = lookup(c, tf, b1)
                t2f = t2 + dtf
                g2 = kgain * (expo(c2, t2f) - expo(c2, t2))
                b2 = np.minimum(bn + g2[:, None] - fault_cost, cap)
                v2 = lookup(c2, t2f, b2)
                q[d, c] = p_nom[:, None] * vn + p_h1[:, None] * v1 + p_h2[:, None] * v2
            else:
                q[d, c] = vn
        tv = np.full(n, t)
        tw = tv + rover.wait_duration
        gw = kgain * (expo(cells, tw) - expo(cells, tv))
        bw = np.minimum(bpts + gw[:, None] - rover.p_wait * rover.wait_duration / 3600.0, cap)
        q[WAIT_CODE] = lookup(cells, tw, bw)
        best = np.argmax(q, axis=0).astype(np.int8)
        v = np.take_along_axis(q, best[None].astype(np.int64), axis=0)[0]
        np.maximum(v, 0.0, out=v)
        here_safe = bpts >= safe.threshold_batch(cells, tv)[:, None] - ENERGY_EPS
        # A safe corner may still cover unsafe continuous states earlier in
        # the bin; waiting carries them toward the corner time.
        v[here_safe] = 1.0
        best[here_safe] = WAIT_CODE
        v[~trav] = 0.0
        best[~trav] = HALT_CODE
        change = max(change, float(np.max(np.abs(v - values[i]))))
        values[i] = v
        actions[i] = best
    return change


def build_recovery(s: Scenario, lat: Optional[StateLattice] = None, tol: float = 1e-5,
                   mode: str = "sweep", max_sweeps: int = 50) -> RecoveryPolicy:
    """Compute the reach-safety value table and greedy policy.

    ``mode="sweep"`` runs the single exact backward pass.  ``mode="iterate"``
    repeats passes until the largest change falls below ``tol``.
    """
    if lat is None:
        lat = StateLattice.for_scenario(s)
    check_lattice(s, lat)
    shape = (lat.n_time, lat.n_cells, lat.n_energy)
    values = np.zeros(shape)
    actions = np.full(shape, HALT_CODE, dtype=np.int8)
    sweeps = 1
    change = _sweep(s, lat, values, actions)
    if mode == "iterate":
        while change >= tol and sweeps < max_sweeps:
            change = _sweep(s, lat, values, actions)
            sweeps += 1
    elif mode != "sweep":
        raise ValueError(f"unknown mode {mode!r}")
    values.setflags(write=False)
    actions.setflags(write=False)
    return RecoveryPolicy(lat, values, actions, s, s.digest(), sweeps)


def save_policy(pol: RecoveryPolicy, path) -> None:
    header = {
        "lattice": asdict(pol.lattice),
        "scenario_hash": pol.scenario_hash,
        "shape": list(pol.values.shape),
        "sweeps": pol.sweeps,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(pol.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(pol.actions, dtype="<i1").tobytes())


def load_policy(path, s: Scenario) -> RecoveryPolicy:
    """Read a policy file and bind it to ``s``; the scenario hash must match."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"recovery policy not found: {path}")
    data = path.read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path} is not a recovery policy file")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen])
    if header["scenario_hash"] != s.digest():
        raise ValueError("recovery policy was built for a different scenario (hash mismatch)")
    lat = StateLattice(**header["lattice"])
    shape = tuple(header["shape"])
    count = int(np.prod(shape))
    off = 16 + hlen
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
    actions = np.frombuffer(data, dtype="<i1", count=count, offset=off + 8 * count).reshape(shape).astype(np.int8)
    values.setflags(write=False)
    actions.setflags(write=False)
    return RecoveryPolicy(lat, values, actions, s, header["scenario_hash"], header.get("sweeps", 1))
