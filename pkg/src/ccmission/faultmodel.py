"""Poisson fault split for drive actions: probabilities, outcome states, sampling."""

from __future__ import annotations

import math
from typing import List, NamedTuple, Tuple

from .envmodel import Scenario
from .model import MOVE, Action, FaultParams, RoverState
from .roverdyn import move_table, nominal_transition, solar_gain

__all__ = [
    "FaultParams", "Outcome", "NOMINAL", "FAULT_H1", "FAULT_H2",
    "fault_probabilities", "enumerate_outcomes", "sample_outcome", "fault_delay_state",
]

NOMINAL = "Nominal"
FAULT_H1 = "FaultH1"
FAULT_H2 = "FaultH2"


class Outcome(NamedTuple):
    label: str
    probability: float
    state: RoverState


def fault_probabilities(rho: float, alpha: float) -> Tuple[float, float, float]:
    """Return ``(p_nom, p_h1, p_h2)`` for a drive of ``rho`` metres at ``alpha`` faults/m.

    ``p_h1`` is a fault in the first half of the drive, ``p_h2`` no fault in
    the first half but one in the second.
    """
    if rho < 0 or alpha < 0:
        raise ValueError(f"distance and fault rate must be >= 0, got rho={rho}, alpha={alpha}")
    half = -0.5 * alpha * rho
    p_h1 = -math.expm1(half)
    # exp(half) <= 1 keeps p_h2 <= p_h1 exactly in floating point.
    p_h2 = math.exp(half) * p_h1
    p_nom = math.exp(2.0 * half)
    return p_nom, p_h1, p_h2


def fault_delay_state(x: RoverState, s: Scenario) -> RoverState:
    """``x`` after sitting out one fault recovery period in place."""
    dt = s.fault.recovery_duration
    gain = solar_gain(x.cell, x.time, x.time + dt, s)
    energy = min(x.energy + gain - s.rover.p_fault * dt / 3600.0, s.rover.capacity)
    return RoverState(x.cell, x.time + dt, energy, x.next_wp)


def enumerate_outcomes(x: RoverState, a: Action, s: Scenario) -> List[Outcome]:
    """All stochastic outcomes of ``a`` from ``x``, ordered FaultH1, FaultH2, Nominal.

    Static actions and fault-free drives yield a single nominal outcome.  A
    first-half fault annuls the drive: the rover stays in the origin cell for
    the recovery period.  A second-half fault completes the drive and then
    waits out the recovery period at the destination.
    """
    nominal = nominal_transition(x, a, s)
    if a.kind != MOVE or s.fault.rate == 0.0:
        return [Outcome(NOMINAL, 1.0, nominal)]
    rho = move_table(s)[x.cell[0], x.cell[1], a.arg]
    p_nom, p_h1, p_h2 = fault_probabilities(rho, s.fault.rate)
    return [
        Outcome(FAULT_H1, p_h1, fault_delay_state(x, s)),
        Outcome(FAULT_H2, p_h2, fault_delay_state(nominal, s)),
        Outcome(NOMINAL, p_nom, nominal),
    ]


def sample_outcome(x: RoverState, a: Action, s: Scenario, rng) -> Outcome:
    """Draw one outcome by inverse CDF over the order FaultH1, FaultH2, Nominal.

    A uniform variate is consumed only when more than one outcome exists.
    """
    outcomes = enumerate_outcomes(x, a, s)
    if len(outcomes) == 1:
        return outcomes[0]
    u = rng.random()
    acc = 0.0
    for out in outcomes[:-1]:
        acc += out.probability
        if u < acc:
            return out
    return outcomes[-1]
