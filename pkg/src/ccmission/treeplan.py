"""Risk-bounded backward A* over waypoint-indexed time/energy states.

Plans are partial policy trees: a nominal chain of actions from the current
state to a safe terminal, plus the two fault branches of every drive.  Fault
branches are not expanded; their risk is read off the recovery policy, and a
rover that lands on one re-plans.

The search runs backward in time from safe terminals.  Each node carries the
least battery energy that keeps the rest of the chain feasible
(``min_energy_req``) and the probability of failure when executing the chain
from it (``exec_risk``).  Nodes are indexed by waypoint stage: a node at
stage ``k`` has completed waypoints ``0 .. k-1``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .envmodel import Scenario
from .faultmodel import NOMINAL, enumerate_outcomes
from .model import DIRECTIONS, Action, Cell, RoverState
from .recovery import RecoveryPolicy
from .roverdyn import ENERGY_EPS, TIME_EPS, is_safe, move_table, nominal_transition, safe_set


class InfeasibleError(Exception):
    """No plan, not even straight to safety, satisfies the risk bound."""


@dataclass(frozen=True)
class PlannerConfig:
    time_class: float = 1800.0       # s, resolution-equivalence time class
    max_iterations: int = 15000      # node expansions per search
    goal_spacing: Optional[float] = None  # s, terminal time grid; defaults to time_class

    @property
    def terminal_spacing(self) -> float:
        return self.time_class if self.goal_spacing is None else self.goal_spacing


@dataclass(frozen=True)
class FaultBranch:
    label: str
    probability: float
    state: RoverState
    risk: float


@dataclass(frozen=True)
class TreeNode:
    cell: Cell
    time: float                   # departure time of ``action``
    next_wp: int
    min_energy_req: float
    exec_risk: float
    action: Optional[Action]      # None at the terminal node
    fault_branches: Tuple[FaultBranch, ...] = ()

    @property
    def state(self) -> RoverState:
        return RoverState(self.cell, self.time, self.min_energy_req, self.next_wp)


@dataclass(frozen=True)
class PartialPolicyTree:
    nodes: Tuple[TreeNode, ...]   # nominal chain, root first, terminal last
    beta: float
    first_wp: int                 # next_wp at the root
    n_waypoints: int              # waypoints covered by the chain
    requested: int                # waypoints that were asked for
    expansions: int = 0
    objective: float = 0.0        # s, chain duration after the start-gate waits

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def terminal(self) -> TreeNode:
        return self.nodes[-1]

    @property
    def exec_risk(self) -> float:
        return self.nodes[0].exec_risk

    @property
    def truncated(self) -> bool:
        return self.n_waypoints < self.requested

    @property
    def traverse_time(self) -> float:
        return self.terminal.time - self.root.time


class _Node:
    __slots__ = ("cell", "time", "stage", "req", "risk", "action", "succ", "faults", "g")

    def __init__(self, cell, time, stage, req, risk, action, succ, faults, g):
        self.cell = cell
        self.time = time
        self.stage = stage
        self.req = req
        self.risk = risk
        self.action = action
        self.succ = succ
        self.faults = faults
        self.g = g


def components(s: Scenario) -> np.ndarray:
    """Connected-component label of every cell under legal moves (-1 if blocked)."""
    labels = s.cache.get("components")
    if labels is not None:
        return labels
    h, w = s.terrain.shape
    dist = move_table(s)
    labels = np.full((h, w), -1, dtype=np.int64)
    nxt = 0
    for r in range(h):
        for c in range(w):
            if labels[r, c] >= 0 or not s.terrain.traversable[r, c]:
                continue
            labels[r, c] = nxt
            queue = deque([(r, c)])
            while queue:
                cr, cc = queue.popleft()
                for d, (dr, dc) in enumerate(DIRECTIONS):
                    if math.isfinite(dist[cr, cc, d]) and labels[cr + dr, cc + dc] < 0:
                        labels[cr + dr, cc + dc] = nxt
                        queue.append((cr + dr, cc + dc))
            nxt += 1
    s.cache["components"] = labels
    return labels


def plan_risk(x: RoverState, a: Action, succ_risk: float, s: Scenario,
              pol: RecoveryPolicy) -> Tuple[float, Tuple[FaultBranch, ...]]:
    """Execution risk of taking ``a`` from ``x`` given the successor's risk."""
    outcomes = enumerate_outcomes(x, a, s)
    if len(outcomes) == 1:
        return succ_risk, ()
    branches = []
    risk = 0.0
    for out in outcomes:
        if out.label == NOMINAL:
            risk += out.probability * succ_risk
        else:
            r = pol.risk(out.state)
            branches.append(FaultBranch(out.label, out.probability, out.state, r))
            risk += out.probability * r
    return risk, tuple(branches)


class Planner:
    """Risk-bounded planner bound to one scenario, recovery policy and bound."""

    def __init__(self, s: Scenario, pol: RecoveryPolicy, beta: float,
                 config: PlannerConfig = PlannerConfig()):
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"risk bound must lie in [0, 1], got {beta}")
        if pol.scenario_hash != s.digest():
            raise ValueError("recovery policy was built for a different scenario")
        self.s = s
        self.pol = pol
        self.beta = beta
        self.config = config
        self.memo: Dict[Tuple, object] = {}
        h, w = s.terrain.shape
        rows, cols = np.divmod(np.arange(h * w), w)
        self._rows = rows
        self._cols = cols

    # -- public ----------------------------------------------------------

    def plan(self, x0: RoverState, last_wp: Optional[int] = None) -> PartialPolicyTree:
        """Plan through the longest feasible prefix of waypoints ``x0.next_wp .. last_wp-1``.

        Raises :class:`InfeasibleError` when the start risk exceeds the bound
        or not even a plan straight to safety exists.
        """
        s = self.s
        n_w = s.n_waypoints if last_wp is None else min(last_wp, s.n_waypoints)
        key = (x0.cell, x0.time, x0.energy, x0.next_wp, n_w)
        if key in self.memo:
            hit = self.memo[key]
            if isinstance(hit, InfeasibleError):
                raise hit
            return hit
        try:
            result = self._plan(x0, n_w)
        except InfeasibleError as exc:
            self.memo[key] = exc
            raise
        self.memo[key] = result
        return result

    def _plan(self, x0: RoverState, n_w: int) -> PartialPolicyTree:
        s = self.s
        if self.pol.risk(x0) > self.beta:
            raise InfeasibleError(f"start risk {self.pol.risk(x0):.6g} exceeds bound {self.beta}")
        j = x0.next_wp
        requested = max(n_w - j, 0)
        labels = components(s)
        home = labels[x0.cell]
        reach = j
        while reach < n_w and labels[s.waypoints[reach].cell] == home:
            reach += 1
        expansions = 0
        for m in range(reach, j - 1, -1):
            if m == j and is_safe(x0, s):
                node = TreeNode(x0.cell, x0.time, j, x0.energy, 0.0, None)
                return PartialPolicyTree((node,), self.beta, j, 0, requested, expansions)
            chain, used, objective = self.search(x0, m)
            expansions += used
            if chain is not None:
                return PartialPolicyTree(chain, self.beta, j, m - j, requested, expansions,
                                         float(objective))
        raise InfeasibleError("no risk-bounded plan reaches safety")

    # -- search ----------------------------------------------------------

    def _heuristic(self, x0: RoverState, m: int) -> np.ndarray:
        """Lower bound on the time from ``x0`` to each (stage, cell)."""
        s = self.s
        v = s.rover.velocity
        res = s.terrain.resolution
        out = np.empty((m + 1, self._rows.size))
        base = 0.0
        anchor = x0.cell
        for k in range(x0.next_wp, m + 1):
            dist = res * np.hypot(self._rows - anchor[0], self._cols - anchor[1])
            out[k] = base + dist / v
            if k < m:
                wp = s.waypoints[k]
                base += res * math.hypot(wp.cell[0] - anchor[0], wp.cell[1] - anchor[1]) / v
                base += wp.duration
                anchor = wp.cell
        return out

    def _goals(self, x0: RoverState, m: int, h: np.ndarray) -> List[_Node]:
        s = self.s
        safe = safe_set(s)
        w = s.terrain.width
        dt = self.config.terminal_spacing
        goals = []
        for hv in s.havens:
            end = min(hv.deadline, s.t_max)
            n_t = int(math.floor((end - s.t_min) / dt + 1e-9))
            lo = x0.time + h[m, hv.cell[0] * w + hv.cell[1]] - TIME_EPS
            for i in range(n_t + 1):
                t = s.t_min + i * dt
                if t < lo:
                    continue
                req = safe.threshold(hv.cell, t)
                if req > s.rover.capacity + ENERGY_EPS:
                    continue
                goals.append(_Node(hv.cell, t, m, req, 0.0, None, None, (), 0.0))
        return goals

    def search(self, x0: RoverState, m: int):
        """Backward A* from safe terminals at stage ``m`` to ``x0``.

        Returns ``(chain, expansions, objective)``; ``chain`` is ``None`` on failure.
        """
        s = self.s
        w = s.terrain.width
        dist = move_table(s)
        h = self._heuristic(x0, m)
        j = x0.next_wp
        dt_class = self.config.time_class
        best: Dict[Tuple[int, Cell, int], _Node] = {}
        heap = []
        counter = itertools.count()

        def admit(node: _Node) -> None:
            key = (node.stage, node.cell, int(math.floor((node.time - s.t_min) / dt_class)))
            cur = best.get(key)
            if cur is not None and (node.req > cur.req or (node.req == cur.req and node.risk >= cur.risk)):
                return
            best[key] = node
            f = node.g + h[node.stage, node.cell[0] * w + node.cell[1]]
            heapq.heappush(heap, (f, node.req, node.risk, next(counter), node))

        for goal in self._goals(x0, m, h):
            admit(goal)

        expansions = 0
        while heap and expansions < self.config.max_iterations:
            _, _, _, _, node = heapq.heappop(heap)
            key = (node.stage, node.cell, int(math.floor((node.time - s.t_min) / dt_class)))
            if best.get(key) is not node:
                continue
            if node.stage == j and node.cell == x0.cell:
                chain = self._connect(x0, node)
                if chain is not None:
                    return chain, expansions, node.g
            expansions += 1
            for pred in self._predecessors(node, x0, h, dist):
                admit(pred)
        return None, expansions, math.inf

    def _predecessors(self, n: _Node, x0: RoverState, h: np.ndarray, dist: np.ndarray):
        s = self.s
        rover = s.rover
        cap = rover.capacity
        beta = self.beta
        w = s.terrain.width
        t0 = x0.time
        if n.req > cap + ENERGY_EPS:
            return
        candidates = []
        r1, c1 = n.cell
        for d, (dr, dc) in enumerate(DIRECTIONS):
            cell = (r1 - dr, c1 - dc)
            if not (0 <= cell[0] < s.terrain.height and 0 <= cell[1] < w):
                continue
            rho = dist[cell[0], cell[1], d]
            if not math.isfinite(rho):
                continue
            candidates.append((cell, n.time - rho / rover.velocity, Action.move(d), n.stage))
        candidates.append((n.cell, n.time - rover.wait_duration, Action.wait(), n.stage))
        k = n.stage - 1
        if k >= x0.next_wp and s.waypoints[k].cell == n.cell:
            wp = s.waypoints[k]
            t = n.time - wp.duration
            if wp.window is None or wp.window[0] <= t <= wp.window[1] - wp.duration:
                candidates.append((n.cell, t, Action.science(k), k))
        for cell, t, a, stage in candidates:
            if t < s.t_min or t - t0 < h[stage, cell[0] * w + cell[1]] - TIME_EPS:
                continue
            delta = nominal_transition(RoverState(cell, t, 0.0, stage), a, s).energy
            req = max(n.req - delta, s.b_min)
            if req > cap + ENERGY_EPS:
                continue
            risk, faults = plan_risk(RoverState(cell, t, req, stage), a, n.risk, s, self.pol)
            if risk > beta:
                continue
            yield _Node(cell, t, stage, req, risk, a, n, faults, n.g + (n.time - t))

    def _connect(self, x0: RoverState, gate: _Node) -> Optional[Tuple[TreeNode, ...]]:
        """Join ``x0`` to ``gate`` with waits; ``None`` if ``x0`` lacks the energy."""
        s = self.s
        rover = s.rover
        slack = gate.time - x0.time
        node = gate
        if slack > TIME_EPS:
            n_std = int(math.floor(slack / rover.wait_duration + 1e-9))
            rem = slack - n_std * rover.wait_duration
            times = [gate.time - i * rover.wait_duration for i in range(1, n_std + 1)]
            if rem > TIME_EPS:
                times.append(x0.time)
            else:
                times[-1] = x0.time
            for t in map(float, times):
                dur = float(node.time - t)
                a = Action.wait() if abs(dur - rover.wait_duration) <= TIME_EPS else Action.wait(dur)
                if a.duration is None:
                    dur = rover.wait_duration
                delta = nominal_transition(RoverState(x0.cell, t, 0.0, x0.next_wp), a, s).energy
                req = max(node.req - delta, s.b_min)
                if req > rover.capacity + ENERGY_EPS:
                    return None
                node = _Node(x0.cell, t, x0.next_wp, req, node.risk, a, node, (), node.g + dur)
        if node.req > x0.energy + ENERGY_EPS:
            return None
        chain = []
        while node is not None:
            chain.append(TreeNode(node.cell, float(node.time), node.stage, float(node.req),
                                  float(node.risk), node.action, node.faults))
            node = node.succ
        return tuple(chain)


def plan_mission(x0: RoverState, s: Scenario, pol: RecoveryPolicy, beta: float,
                 last_wp: Optional[int] = None,
                 config: PlannerConfig = PlannerConfig()) -> PartialPolicyTree:
    """One-shot convenience wrapper around :class:`Planner`."""
    return Planner(s, pol, beta, config).plan(x0, last_wp)


def resolution_prune(nodes, time_class: float, t_min: float) -> List:
    """Keep, per (stage, cell, time class), the node with the least energy requirement.

    Ties go to the lower execution risk, then to the earlier node in ``nodes``.
    """
    kept: Dict[Tuple, object] = {}
    for node in nodes:
        key = (node.stage, node.cell, int(math.floor((node.time - t_min) / time_class)))
        cur = kept.get(key)
        if cur is None or node.req < cur.req or (node.req == cur.req and node.risk < cur.risk):
            kept[key] = node
    return list(kept.values())
