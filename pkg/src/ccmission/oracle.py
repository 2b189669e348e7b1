"""Independent reference computations on micro instances.

Everything here is written for clarity rather than speed and shares no code
path with the planner's search or the vectorised recovery sweep beyond the
basic dynamics in ``roverdyn``/``faultmodel``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envmodel import IlluminationSeries, Scenario, ScenarioError, TerrainGrid
from .executive import ZETA
from .faultmodel import NOMINAL, enumerate_outcomes
from .model import (DIRECTIONS, SCIENCE, WAIT_CODE, Action, Cell, FaultParams, Haven,
                    RoverParams, RoverState, Waypoint)
from .recovery import FAIL, SAFE, RecoveryPolicy, StateLattice, conservative_index
from .roverdyn import (ENERGY_EPS, TIME_EPS, available_actions, in_operational, is_safe,
                       move_table, nominal_transition, safe_set)
from .synthetic import MISSION_T_MIN

MICRO_MAX_CELLS = 16
MICRO_MAX_TIME = 8
MICRO_MAX_ENERGY = 8
MICRO_MAX_WAYPOINTS = 2


class MicroBoundsError(ValueError):
    """Instance too large for exhaustive treatment."""


def check_micro(s: Scenario, lat: StateLattice) -> None:
    h, w = s.terrain.shape
    if (h * w > MICRO_MAX_CELLS or lat.n_time > MICRO_MAX_TIME or lat.n_energy > MICRO_MAX_ENERGY
            or s.n_waypoints > MICRO_MAX_WAYPOINTS):
        raise MicroBoundsError(
            f"micro instances allow <= {MICRO_MAX_CELLS} cells, {MICRO_MAX_TIME} time points, "
            f"{MICRO_MAX_ENERGY} energy points and {MICRO_MAX_WAYPOINTS} waypoints; got "
            f"{h * w}, {lat.n_time}, {lat.n_energy}, {s.n_waypoints}")


# -- micro instance builders ------------------------------------------------

MICRO_ROVER = RoverParams(panel_area=0.5, panel_eff=0.3, velocity=0.05, p_drive=110.0,
                          p_fault=80.0, p_wait=80.0, p_hibernate=30.0, capacity=450.0,
                          wait_duration=1200.0)
MICRO_TIME_RES = 1200.0
MICRO_ENERGY_RES = 50.0


def micro_scenario(seed: int = 0, alpha: float = 1.0 / 300.0, waypoints: Sequence[Cell] = ((1, 2),),
                   havens: Sequence[Cell] = ((0, 0),), start: Cell = (3, 3),
                   start_energy: float = 350.0, blocked: Sequence[Cell] = (),
                   haven_target: float = 250.0, size: int = 4) -> Scenario:
    """Small random instance: 60 m cells, 1200 s steps, 8 time and 8 energy points.

    Illumination fractions are drawn from {0, 0.5, 1} per cell and frame;
    haven cells are always lit.  ``blocked`` cells are impassable.
    """
    rng = np.random.default_rng(seed)
    elev = rng.uniform(-2.0, 2.0, size=(size, size))
    mask = np.zeros((size, size), dtype=bool)
    for cell in blocked:
        mask[cell] = True
    terrain = TerrainGrid(elev.astype(np.float32).astype(np.float64), 60.0, blocked=mask)
    t_min = MISSION_T_MIN
    n_frames = MICRO_MAX_TIME - 1
    ts = t_min + MICRO_TIME_RES * np.arange(n_frames)
    frames = rng.choice([0.0, 0.5, 1.0], size=(n_frames, size, size))
    for cell in havens:
        frames[:, cell[0], cell[1]] = 1.0
    illum = IlluminationSeries(ts, frames, MICRO_TIME_RES)
    t_max = t_min + MICRO_TIME_RES * n_frames
    return Scenario(
        terrain=terrain, illum=illum,
        waypoints=tuple(Waypoint(c, MICRO_TIME_RES, 50.0) for c in waypoints),
        havens=tuple(Haven(c, t_max, haven_target) for c in havens),
        t_min=t_min, t_max=t_max, b_min=100.0, b_max=450.0,
        rover=MICRO_ROVER, fault=FaultParams(alpha, 2400.0),
        start=RoverState(start, t_min, start_energy, 0),
    )


def micro_lattice(s: Scenario) -> StateLattice:
    return StateLattice.for_scenario(s, MICRO_TIME_RES, MICRO_ENERGY_RES)


def embedded_micro(s: Scenario, origin: Cell, waypoint: Cell, haven: Cell, start: Cell,
                   start_energy: float, t0: Optional[float] = None, time_res: float = 1800.0,
                   energy_res: float = 150.0, science: Tuple[float, float] = (1800.0, 150.0),
                   fault_recovery: float = 1800.0) -> Scenario:
    """A 4x4 window of ``s`` shrunk to micro bounds.

    Terrain, illumination, drive/wait/fault powers and the fault rate come
    from ``s``.  The window spans 8 lattice time points from ``t0``, the
    battery holds 8 energy points above ``b_min``, a straight drive takes one
    time step, and the science action and fault recovery period are shortened
    to fit.  The terrain is flattened to its mean elevation and the velocity
    set so that a straight drive takes exactly one time step; otherwise the
    lattice's round-up of arrival times would turn most drives into two
    steps.  Cells are in window coordinates.
    """
    r0, c0 = origin
    size = 4
    if not (0 <= r0 and r0 + size <= s.terrain.height and 0 <= c0 and c0 + size <= s.terrain.width):
        raise ScenarioError("micro window leaves the grid")
    t0 = s.t_min if t0 is None else t0
    t1 = t0 + time_res * (MICRO_MAX_TIME - 1)
    blocked = None if s.terrain.blocked is None else s.terrain.blocked[r0:r0 + size, c0:c0 + size]
    mean = np.float32(s.terrain.elevation[r0:r0 + size, c0:c0 + size].mean())
    elev = np.full((size, size), float(mean))  # float32 so the file round trip is exact
    terrain = TerrainGrid(elev, s.terrain.resolution, s.terrain.slope_limit_deg, blocked)
    ts = s.illum.timestamps
    keep = (ts + s.illum.spacing > t0) & (ts < t1)
    illum = IlluminationSeries(ts[keep], s.illum.frames[keep][:, r0:r0 + size, c0:c0 + size].copy(),
                               s.illum.spacing)
    b_max = s.b_min + energy_res * (MICRO_MAX_ENERGY - 1)
    velocity = terrain.resolution / time_res
    rover = RoverParams(**{**s.rover.__dict__, "capacity": b_max, "wait_duration": time_res,
                           "velocity": velocity})
    return Scenario(
        terrain=terrain, illum=illum,
        waypoints=(Waypoint(waypoint, *science),),
        havens=(Haven(haven, t1, s.b_min + energy_res * 2),),
        t_min=t0, t_max=t1, b_min=s.b_min, b_max=b_max,
        rover=rover, fault=FaultParams(s.fault.rate, fault_recovery),
        start=RoverState(start, t0, start_energy, 0),
    )


# Embedded micro sub-scenario of the "medium" preset: a lit haven at the
# south edge of the window and a shadowed waypoint two cells north of it.
MEDIUM_MICRO = dict(origin=(27, 10), waypoint=(1, 1), haven=(3, 1), start=(3, 1),
                    start_energy=700.0, energy_res=50.0, science=(1800.0, 100.0))


def medium_micro(s: Scenario) -> Scenario:
    return embedded_micro(s, **MEDIUM_MICRO)


# -- tree risk ----------------------------------------------------------------

def exact_tree_risk(tree, s: Scenario, pol: RecoveryPolicy) -> float:
    """Failure probability of following ``tree`` then the recovery policy after a fault.

    Forward sum over the nominal chain: the probability of reaching node k
    fault-free times the risk of its two fault branches, plus the terminal
    risk weighted by the probability of a fault-free run.
    """
    total = 0.0
    reach = 1.0
    for node in tree.nodes[:-1]:
        x = RoverState(node.cell, node.time, node.min_energy_req, node.next_wp)
        p_nom = 1.0
        for out in enumerate_outcomes(x, node.action, s):
            if out.label == NOMINAL:
                p_nom = out.probability
            else:
                total += reach * out.probability * pol.risk(out.state)
        reach *= p_nom
    term = tree.nodes[-1]
    x = RoverState(term.cell, term.time, term.min_energy_req, term.next_wp)
    total += reach * (0.0 if is_safe(x, s) else pol.risk(x))
    return total


def energy_shortfall(tree, s: Scenario) -> float:
    """Largest energy deficit (Wh) met by a fault-free run of ``tree`` from its root requirement.

    The run starts at the root's ``min_energy_req``; at every node the
    simulated arrival energy is compared with that node's requirement.
    A terminal that is not safe counts as an infinite deficit, as does
    leaving the operational region.  Zero means the bookkeeping holds.
    """
    root = tree.nodes[0]
    x = RoverState(root.cell, root.time, root.min_energy_req, root.next_wp)
    worst = 0.0
    for node, nxt in zip(tree.nodes[:-1], tree.nodes[1:]):
        x = nominal_transition(x, node.action, s)
        if not in_operational(x, s) or x.cell != nxt.cell or abs(x.time - nxt.time) > TIME_EPS:
            return math.inf
        worst = max(worst, nxt.min_energy_req - x.energy)
    if not is_safe(x, s):
        return math.inf
    return worst


# -- deterministic references (alpha = 0) --------------------------------------

def lattice_reachability(s: Scenario, lat: StateLattice) -> np.ndarray:
    """1 where some action sequence from the lattice corner reaches SAFE, else 0.

    Transitions are evaluated from each corner state and mapped back with the
    conservative index, exactly as the recovery model prescribes, but here by
    plain recursion over scalar states.
    """
    w = lat.width
    tp = lat.time_points
    bp = lat.energy_points
    out = np.zeros((lat.n_time, lat.n_cells, lat.n_energy))

    @lru_cache(maxsize=None)
    def reach(r: int, c: int, i: int, j: int) -> bool:
        x = RoverState((r, c), float(tp[i]), float(bp[j]))
        if is_safe(x, s):
            return True
        for a in available_actions(x, s):
            if a.kind == SCIENCE:
                continue
            y = nominal_transition(x, a, s)
            idx = conservative_index(y, lat, s)
            if idx == SAFE or (idx != FAIL and reach(*idx)):
                return True
        return False

    for i in range(lat.n_time - 1, -1, -1):
        for r in range(lat.height):
            for c in range(lat.width):
                if not s.terrain.traversable[r, c]:
                    continue
                for j in range(lat.n_energy):
                    out[i, r * w + c, j] = 1.0 if reach(r, c, i, j) else 0.0
    return out


def deterministic_optimum(x0: RoverState, m: int, s: Scenario, time_class: float = 1800.0):
    """Least chain duration of a fault-free plan from ``x0`` through waypoints up to ``m``.

    Terminals are haven states at times ``t_min + k * time_class``; the chain
    may start after ``x0.time`` with waits at the start cell in front of it,
    which are not counted.  Label-setting search on exact times with Pareto
    dominance over (duration, energy requirement); no resolution classes.
    Returns ``None`` when no plan exists.
    """
    rover = s.rover
    safe = safe_set(s)
    dist = move_table(s)
    h_, w_ = s.terrain.shape
    j0 = x0.next_wp
    heap = []
    tie = itertools.count()
    for hv in s.havens:
        end = min(hv.deadline, s.t_max)
        n_t = int(math.floor((end - s.t_min) / time_class + 1e-9))
        for k in range(n_t + 1):
            t = s.t_min + k * time_class
            if t < x0.time:
                continue
            req = safe.threshold(hv.cell, t)
            if req <= rover.capacity + ENERGY_EPS:
                heapq.heappush(heap, (0.0, req, next(tie), hv.cell, t, m))
    settled: Dict[Tuple, List[Tuple[float, float]]] = {}
    while heap:
        g, req, _, cell, t, stage = heapq.heappop(heap)
        key = (cell, round(t, 6), stage)
        labels = settled.setdefault(key, [])
        if any(g2 <= g and r2 <= req for g2, r2 in labels):
            continue
        labels.append((g, req))
        if stage == j0 and cell == x0.cell and _prefix_ok(x0, t, req, s):
            return g
        preds = []
        for d, (dr, dc) in enumerate(DIRECTIONS):
            prev = (cell[0] - dr, cell[1] - dc)
            if 0 <= prev[0] < h_ and 0 <= prev[1] < w_ and math.isfinite(dist[prev + (d,)]):
                preds.append((prev, t - dist[prev + (d,)] / rover.velocity, Action.move(d), stage))
        preds.append((cell, t - rover.wait_duration, Action.wait(), stage))
        if stage > j0 and s.waypoints[stage - 1].cell == cell:
            wp = s.waypoints[stage - 1]
            ts = t - wp.duration
            if wp.window is None or wp.window[0] <= ts <= wp.window[1] - wp.duration:
                preds.append((cell, ts, Action.science(stage - 1), stage - 1))
        for prev, tp, a, st in preds:
            if tp < x0.time - TIME_EPS or tp < s.t_min:
                continue
            delta = nominal_transition(RoverState(prev, tp, 0.0, st), a, s).energy
            r = max(req - delta, s.b_min)
            if r > rover.capacity + ENERGY_EPS:
                continue
            heapq.heappush(heap, (g + (t - tp), r, next(tie), prev, tp, st))
    return None


def _prefix_ok(x0: RoverState, t: float, req: float, s: Scenario) -> bool:
    """Can ``x0`` wait in place until ``t`` and still hold ``req``?

    Uses the same split as plan construction: one alignment wait, then
    standard waits.
    """
    return _waits_ok(x0, t, req, s)


def _waits_ok(x0: RoverState, t: float, req: float, s: Scenario) -> bool:
    rover = s.rover
    n_std = int(math.floor((t - x0.time) / rover.wait_duration + 1e-9))
    times = [t - i * rover.wait_duration for i in range(1, n_std + 1)]
    rem = (t - x0.time) - n_std * rover.wait_duration
    if rem > TIME_EPS:
        times.append(x0.time)
    elif times:
        times[-1] = x0.time
    r = req
    nxt = t
    for tt in times:
        dur = nxt - tt
        a = Action.wait() if abs(dur - rover.wait_duration) <= TIME_EPS else Action.wait(dur)
        delta = nominal_transition(RoverState(x0.cell, tt, 0.0, x0.next_wp), a, s).energy
        r = max(r - delta, s.b_min)
        if r > rover.capacity + ENERGY_EPS:
            return False
        nxt = tt
    return x0.energy >= r - ENERGY_EPS


# -- Monte Carlo rollouts of the recovery policy --------------------------------

def mc_recovery_failures(x: RoverState, s: Scenario, pol: RecoveryPolicy, n: int,
                         rng: np.random.Generator, max_steps: int = 10000) -> int:
    """Number of failures among ``n`` continuous-state rollouts of the recovery policy.

    All rollouts advance together as arrays.  A rollout fails when it leaves
    the operational region or the policy halts outside the safe set.
    """
    rover = s.rover
    lat = pol.lattice
    h, w = s.terrain.shape
    kgain = rover.panel_area * rover.panel_eff * 1367.0 / 3600.0
    expo = s.illum.exposure_batch
    dist = move_table(s).reshape(h * w, 8)
    drow = np.array([d[0] for d in DIRECTIONS])
    dcol = np.array([d[1] for d in DIRECTIONS])
    trav = s.terrain.traversable.ravel()
    safe = safe_set(s)
    cell = np.full(n, x.cell[0] * w + x.cell[1])
    t = np.full(n, float(x.time))
    b = np.full(n, float(x.energy))
    active = np.ones(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    alpha = s.fault.rate
    dtf = s.fault.recovery_duration
    for _ in range(max_steps):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        c, tt, bb = cell[idx], t[idx], b[idx]
        out = ~trav[c] | (tt > s.t_max) | (tt < s.t_min) | (bb < s.b_min - ENERGY_EPS)
        thr = safe.threshold_batch(c, tt)
        ok = ~out & (bb >= thr - ENERGY_EPS)
        failed[idx[out]] = True
        active[idx[out | ok]] = False
        go = ~(out | ok)
        idx, c, tt, bb = idx[go], c[go], tt[go], bb[go]
        if idx.size == 0:
            break
        i = np.clip(np.ceil((tt - lat.t_min) / lat.time_res - 1e-9).astype(np.int64), 0, lat.n_time - 1)
        j = np.clip(np.floor((bb - lat.b_min) / lat.energy_res + 1e-9).astype(np.int64), 0, lat.n_energy - 1)
        act = pol.actions[i, c, j].astype(np.int64)
        halt = act < 0
        failed[idx[halt]] = True
        active[idx[halt]] = False
        wait = act == WAIT_CODE
        mv = ~halt & ~wait
        # waits
        wi = idx[wait]
        if wi.size:
            cw, tw = cell[wi], t[wi]
            t2 = tw + rover.wait_duration
            gain = kgain * (expo(cw, t2) - expo(cw, tw))
            b[wi] = np.minimum(b[wi] + gain - rover.p_wait * rover.wait_duration / 3600.0, rover.capacity)
            t[wi] = t2
        mi = idx[mv]
        if mi.size:
            d = act[mv]
            c1 = cell[mi]
            c2 = c1 + drow[d] * w + dcol[d]
            rho = dist[c1, d]
            dt = rho / rover.velocity
            t1 = t[mi]
            mid = t1 + 0.5 * dt
            t2 = t1 + dt
            gain = kgain * (expo(c1, mid) - expo(c1, t1)) + kgain * (expo(c2, t2) - expo(c2, mid))
            b_nom = np.minimum(b[mi] + gain - rover.p_drive * dt / 3600.0, rover.capacity)
            half = -0.5 * alpha * rho
            p_h1 = -np.expm1(half)
            p_h2 = np.exp(half) * p_h1
            u = rng.random(mi.size)
            h1 = u < p_h1
            h2 = ~h1 & (u < p_h1 + p_h2)
            new_c = np.where(h1, c1, c2)
            base_t = np.where(h1, t1, t2)
            base_b = np.where(h1, b[mi], b_nom)
            fault = h1 | h2
            tf = base_t + dtf
            gf = kgain * (expo(new_c, tf) - expo(new_c, base_t))
            bf = np.minimum(base_b + gf - rover.p_fault * dtf / 3600.0, rover.capacity)
            cell[mi] = new_c
            t[mi] = np.where(fault, tf, base_t)
            b[mi] = np.where(fault, bf, base_b)
    return int(failed.sum() + active.sum())


# -- exhaustive chance-constrained optimum on the lattice model -----------------

@dataclass
class _Front:
    reward: np.ndarray       # expected reward, descending
    risk: np.ndarray         # failure probability, descending with reward
    action: np.ndarray       # action code per point (-2 stop, 9 science, 0..8)
    choice: np.ndarray       # (k, 3) index into each outcome's front, -1 unused


_STOP = -2
_SCIENCE = 9
_ROUND = 12
RISK_BIN = 2e-4


def _pareto(reward: np.ndarray, risk: np.ndarray, risk_bin: float = 0.0) -> np.ndarray:
    """Indices of points not dominated in (max reward, min risk), reward descending.

    With ``risk_bin > 0`` only the best-reward point of each risk bin
    ``[k * risk_bin, (k + 1) * risk_bin)`` is kept.  Kept points carry their
    true risk, so the thinned front is a subset of achievable policies.
    """
    r = np.round(reward, _ROUND)
    p = np.round(risk, _ROUND)
    order = np.lexsort((p, -r))
    ps = p[order]
    prev = np.concatenate(([np.inf], np.minimum.accumulate(ps)[:-1]))
    keep = order[ps < prev]
    if risk_bin > 0.0 and keep.size > 1:
        # Reward is descending along keep, so the first hit in each bin is its best.
        bins = np.floor(p[keep] / risk_bin)
        _, first = np.unique(bins, return_index=True)
        keep = keep[np.sort(first)]
    return keep


class LatticeCCDP:
    """Exact chance-constrained DP over deterministic lattice policies.

    States are lattice points augmented with the next waypoint index.  Every
    action is applied to the corner state and each outcome is mapped back
    with the conservative index; outcomes that leave the operational region
    fail.  A lattice state whose corner is safe may stop there.  Each state
    keeps the Pareto front of (expected reward, failure probability) over all
    deterministic history-dependent policies, with back-pointers so that the
    chosen policy can be replayed.  Fronts are thinned to one point per
    ``risk_bin`` of failure probability (0 disables thinning); without it
    front sizes multiply across outcomes and exhaust memory.
    """

    def __init__(self, s: Scenario, lat: StateLattice, zeta: float = ZETA,
                 risk_bin: float = RISK_BIN):
        check_micro(s, lat)
        self.risk_bin = risk_bin
        self.s = s
        self.lat = lat
        self.zeta = zeta
        self.fronts: Dict[Tuple[int, int, int, int, int], _Front] = {}
        self.transitions: Dict[Tuple, List] = {}
        self._build()

    def _state(self, key) -> RoverState:
        r, c, i, j, k = key
        lat = self.lat
        return RoverState((r, c), float(lat.time_points[i]), float(lat.energy_points[j]), k)

    def _outcomes(self, key, a: Action):
        """List of (probability, next key or None for failure)."""
        x = self._state(key)
        res = []
        for out in enumerate_outcomes(x, a, self.s):
            y = out.state
            if not in_operational(y, self.s):
                res.append((out.probability, None))
                continue
            i = self.lat.time_index(y.time)
            j = self.lat.energy_index(y.energy)
            res.append((out.probability, (y.cell[0], y.cell[1], i, j, y.next_wp)))
        return res

    def _build(self) -> None:
        s, lat = self.s, self.lat
        for i in range(lat.n_time - 1, -1, -1):
            for r in range(lat.height):
                for c in range(lat.width):
                    if not s.terrain.traversable[r, c]:
                        continue
                    for j in range(lat.n_energy):
                        for k in range(s.n_waypoints, -1, -1):
                            self.fronts[(r, c, i, j, k)] = self._backup((r, c, i, j, k))

    def _backup(self, key) -> _Front:
        s = self.s
        x = self._state(key)
        rewards, risks, actions, choices = [], [], [], []
        if is_safe(x, s):
            rewards.append(np.array([0.0]))
            risks.append(np.array([0.0]))
            actions.append(np.array([_STOP]))
            choices.append(np.full((1, 3), -1))
        for a in available_actions(x, s):
            code = _SCIENCE if a.kind == SCIENCE else (WAIT_CODE if a.kind == "wait" else a.arg)
            outs = self._outcomes(key, a)
            self.transitions[(key, code)] = outs
            gain = 1.0 if a.kind == SCIENCE else self.zeta
            rew = np.array([0.0])
            rsk = np.array([0.0])
            ch = np.zeros((1, 0), dtype=np.int64)
            for p, nxt in outs:
                if nxt is None:
                    fr_r, fr_p = np.array([0.0]), np.array([1.0])
                else:
                    f = self.fronts[nxt]
                    fr_r, fr_p = f.reward, f.risk
                if fr_r.size == 0:
                    rew = np.zeros(0)
                    break
                rew = (rew[:, None] + p * fr_r[None, :]).ravel()
                rsk = (rsk[:, None] + p * fr_p[None, :]).ravel()
                n_old, n_new = ch.shape[0], fr_r.size
                ch = np.concatenate([np.repeat(ch, n_new, axis=0),
                                     np.tile(np.arange(n_new), n_old)[:, None]], axis=1)
                keep = _pareto(rew, rsk, self.risk_bin)
                rew, rsk, ch = rew[keep], rsk[keep], ch[keep]
            if rew.size == 0:
                continue
            full = np.full((rew.size, 3), -1)
            full[:, :ch.shape[1]] = ch
            rewards.append(rew + gain)
            risks.append(rsk)
            actions.append(np.full(rew.size, code))
            choices.append(full)
        if not rewards:
            # Nothing legal and not safe: certain failure.
            return _Front(np.array([0.0]), np.array([1.0]), np.array([-1]), np.full((1, 3), -1))
        rew = np.concatenate(rewards)
        rsk = np.concatenate(risks)
        act = np.concatenate(actions)
        ch = np.concatenate(choices)
        keep = _pareto(rew, rsk, self.risk_bin)
        return _Front(rew[keep], rsk[keep], act[keep], ch[keep])

    def key_of(self, x: RoverState):
        lat = self.lat
        return (x.cell[0], x.cell[1], lat.time_index(x.time), lat.energy_index(x.energy), x.next_wp)

    def optimum(self, x: RoverState, beta: float) -> Tuple[float, float, int]:
        """(max expected reward, its failure probability, front index) with risk <= beta."""
        if not in_operational(x, self.s):
            return 0.0, 1.0, -1
        f = self.fronts[self.key_of(x)]
        ok = np.nonzero(f.risk <= beta + 1e-12)[0]
        if ok.size == 0:
            return -math.inf, 1.0, -1
        k = int(ok[np.argmax(f.reward[ok])])
        return float(f.reward[k]), float(f.risk[k]), k

    def replay(self, key, k: int) -> Tuple[float, float]:
        """Re-enumerate the full outcome tree of front point ``k`` at ``key``."""
        f = self.fronts[key]
        code = int(f.action[k])
        if code == _STOP:
            return 0.0, 0.0
        if code == -1:
            return 0.0, 1.0
        outs = self.transitions[(key, code)]
        gain = 1.0 if code == _SCIENCE else self.zeta
        rew, rsk = gain, 0.0
        for n, (p, nxt) in enumerate(outs):
            if nxt is None:
                rsk += p
                continue
            r2, p2 = self.replay(nxt, int(f.choice[k, n]))
            rew += p * r2
            rsk += p * p2
        return rew, rsk

    @property
    def n_states(self) -> int:
        return len(self.fronts)


def exhaustive_cc_optimum(s: Scenario, lat: StateLattice, beta: float,
                          x0: Optional[RoverState] = None, zeta: float = ZETA) -> Tuple[float, float]:
    """Best expected reward with failure probability at most ``beta`` on the lattice model."""
    dp = LatticeCCDP(s, lat, zeta)
    reward, risk, _ = dp.optimum(s.start if x0 is None else x0, beta)
    return reward, risk
