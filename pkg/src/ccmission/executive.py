"""Online execution: follow the plan tree, re-plan after faults, fall back to recovery.

Also runs seeded Monte Carlo campaigns and summarises them.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envmodel import Scenario
from .faultmodel import NOMINAL, sample_outcome
from .model import SCIENCE, Action, RoverState
from .recovery import RecoveryPolicy
from .roverdyn import in_operational, is_safe
from .treeplan import InfeasibleError, PartialPolicyTree, Planner, PlannerConfig

ZETA = -0.001
Z99 = 2.5758293035489004  # two-sided 99% normal quantile

SAFE_SUCCESS = "SafeSuccess"
OPERATIONAL_EXIT = "OperationalExit"
STRANDED = "Stranded"
INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class Step:
    state: RoverState       # state the action was taken from
    action: Action
    outcome: str


@dataclass
class TrialRecord:
    seed: Tuple[int, ...]
    steps: List[Step] = field(default_factory=list)
    final_state: Optional[RoverState] = None
    faults: int = 0
    waypoints: int = 0
    replans: int = 0
    recovery_steps: int = 0     # actions taken under the recovery policy
    reward: float = 0.0
    status: str = INFEASIBLE
    wall_time: float = 0.0

    @property
    def success(self) -> bool:
        return self.status == SAFE_SUCCESS

    def summary(self) -> dict:
        return {"seed": list(self.seed), "status": self.status, "reward": self.reward,
                "waypoints": self.waypoints, "faults": self.faults, "replans": self.replans,
                "recovery_steps": self.recovery_steps, "steps": len(self.steps)}


def trace_reward(steps: Sequence[Step], zeta: float = ZETA) -> float:
    """+1 per completed science action, ``zeta`` for every other action."""
    n_sci = sum(1 for st in steps if st.action.kind == SCIENCE)
    return n_sci + zeta * (len(steps) - n_sci)


def run_online(x0: RoverState, s: Scenario, pol: RecoveryPolicy, beta: float, rng,
               planner: Optional[Planner] = None, zeta: float = ZETA,
               last_wp: Optional[int] = None, seed: Tuple[int, ...] = ()) -> TrialRecord:
    """Execute one mission from ``x0`` with outcomes drawn from ``rng``."""
    started = time.perf_counter()
    if planner is None:
        planner = Planner(s, pol, beta)
    rec = TrialRecord(seed=tuple(seed))
    x = x0

    def act(a: Action):
        nonlocal x
        out = sample_outcome(x, a, s, rng)
        rec.steps.append(Step(x, a, out.label))
        if out.label != NOMINAL:
            rec.faults += 1
        elif a.kind == SCIENCE:
            rec.waypoints += 1
        x = out.state
        return out.label

    def finish(status: str) -> TrialRecord:
        rec.status = status
        rec.final_state = x
        rec.reward = trace_reward(rec.steps, zeta)
        rec.wall_time = time.perf_counter() - started
        return rec

    if not in_operational(x, s):
        return finish(OPERATIONAL_EXIT)
    if pol.risk(x) > beta:
        return finish(INFEASIBLE)

    tree = _try_plan(planner, x, last_wp)
    while tree is not None:
        replanned = False
        for node in tree.nodes[:-1]:
            if not in_operational(x, s):
                return finish(OPERATIONAL_EXIT)
            if act(node.action) != NOMINAL:
                rec.replans += 1
                tree = _try_plan(planner, x, last_wp) if in_operational(x, s) else None
                replanned = True
                break
        if not replanned:
            tree = None

    # Recovery: follow the safe policy until safe or failed.
    while True:
        if is_safe(x, s):
            return finish(SAFE_SUCCESS)
        if not in_operational(x, s):
            return finish(OPERATIONAL_EXIT)
        a = pol.greedy_action(x)
        if a is None:
            return finish(STRANDED)
        rec.recovery_steps += 1
        act(a)


def _try_plan(planner: Planner, x: RoverState, last_wp) -> Optional[PartialPolicyTree]:
    if planner.pol.risk(x) > planner.beta:
        return None
    try:
        return planner.plan(x, last_wp)
    except InfeasibleError:
        return None


def trial_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([base_seed, index])


@dataclass(frozen=True)
class CampaignStats:
    n: int
    mean_reward: float
    failure_rate: float
    ci_half_width: float
    histogram: Dict[int, int]
    status_counts: Dict[str, int]
    trials: Tuple[dict, ...]

    def report(self, **extra) -> dict:
        out = {
            "n": self.n,
            "mean_reward": self.mean_reward,
            "failure_rate": self.failure_rate,
            "ci": {"method": "normal-approximation binomial, 99%", "half_width": self.ci_half_width},
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "status_counts": dict(sorted(self.status_counts.items())),
            "trials": list(self.trials),
        }
        out.update(extra)
        return out


def ci_half_width(p: float, n: int, z: float = Z99) -> float:
    return z * math.sqrt(p * (1.0 - p) / n)


def summarise(records: Sequence[TrialRecord]) -> CampaignStats:
    n = len(records)
    if n == 0:
        raise ValueError("cannot summarise an empty campaign")
    failures = sum(1 for r in records if not r.success)
    p = failures / n
    hist: Dict[int, int] = {}
    status: Dict[str, int] = {}
    for r in records:
        hist[r.waypoints] = hist.get(r.waypoints, 0) + 1
        status[r.status] = status.get(r.status, 0) + 1
    mean_reward = math.fsum(r.reward for r in records) / n
    return CampaignStats(n, mean_reward, p, ci_half_width(p, n), hist, status,
                         tuple(r.summary() for r in records))


_WORKER: dict = {}


def _init_worker(s, pol, beta, config, zeta, last_wp, x0, base_seed):
    _WORKER.update(planner=Planner(s, pol, beta, config), s=s, pol=pol, beta=beta,
                   zeta=zeta, last_wp=last_wp, x0=x0, base_seed=base_seed)


def _run_chunk(indices: Sequence[int]) -> List[TrialRecord]:
    w = _WORKER
    out = []
    for i in indices:
        rec = run_online(w["x0"], w["s"], w["pol"], w["beta"], trial_rng(w["base_seed"], i),
                         planner=w["planner"], zeta=w["zeta"], last_wp=w["last_wp"],
                         seed=(w["base_seed"], i))
        rec.steps = []  # traces stay in the worker
        out.append(rec)
    return out


def run_campaign(n_trials: int, base_seed: int, x0: RoverState, s: Scenario,
                 pol: RecoveryPolicy, beta: float, threads: int = 1,
                 config: PlannerConfig = PlannerConfig(), zeta: float = ZETA,
                 last_wp: Optional[int] = None, planner: Optional[Planner] = None,
                 keep_traces: bool = False) -> Tuple[CampaignStats, List[TrialRecord]]:
    """Run ``n_trials`` independent seeded missions; trial ``i`` draws from stream (base_seed, i).

    Results do not depend on ``threads``: every trial has its own stream and
    planning is deterministic.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if threads <= 0:
        threads = os.cpu_count() or 1
    if threads == 1:
        planner = planner or Planner(s, pol, beta, config)
        records = []
        for i in range(n_trials):
            rec = run_online(x0, s, pol, beta, trial_rng(base_seed, i), planner=planner,
                             zeta=zeta, last_wp=last_wp, seed=(base_seed, i))
            if not keep_traces:
                rec.steps = []
            records.append(rec)
    else:
        chunks = [list(range(k, n_trials, threads)) for k in range(threads)]
        by_index: Dict[int, TrialRecord] = {}
        with ProcessPoolExecutor(threads, initializer=_init_worker,
                                 initargs=(s, pol, beta, config, zeta, last_wp, x0, base_seed)) as ex:
            for idx, recs in zip(chunks, ex.map(_run_chunk, chunks)):
                by_index.update(zip(idx, recs))
        records = [by_index[i] for i in range(n_trials)]
    return summarise(records), records
