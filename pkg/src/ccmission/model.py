"""Plain data records shared across the planning stack.

Cells are ``(row, col)`` tuples; row 0 is the northern edge of the map.
Times are seconds since the Unix epoch, energies are watt-hours.
Waypoint indices are zero-based: ``next_wp == len(waypoints)`` means the
waypoint list is exhausted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

Cell = Tuple[int, int]

# Move directions in the fixed tie-break order N, NE, E, SE, S, SW, W, NW.
DIRECTIONS: Tuple[Cell, ...] = (
    (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1),
)
DIRECTION_NAMES = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")

MOVE = "move"
WAIT = "wait"
SCIENCE = "science"


class Action(NamedTuple):
    """A rover action.

    ``arg`` is the direction index for moves and the waypoint index for
    science actions.  ``duration`` overrides the standard wait duration; the
    planner uses it only for the alignment wait in front of a plan.
    """

    kind: str
    arg: int = 0
    duration: Optional[float] = None

    @classmethod
    def move(cls, direction: int) -> "Action":
        return cls(MOVE, direction)

    @classmethod
    def wait(cls, duration: Optional[float] = None) -> "Action":
        return cls(WAIT, 0, duration)

    @classmethod
    def science(cls, k: int) -> "Action":
        return cls(SCIENCE, k)

    @property
    def is_static(self) -> bool:
        return self.kind != MOVE

    def __str__(self) -> str:
        if self.kind == MOVE:
            return DIRECTION_NAMES[self.arg]
        if self.kind == SCIENCE:
            return f"science:{self.arg}"
        if self.duration is None:
            return "wait"
        return f"wait:{self.duration!r}"

    @classmethod
    def parse(cls, text: str) -> "Action":
        if text in DIRECTION_NAMES:
            return cls.move(DIRECTION_NAMES.index(text))
        if text == "wait":
            return cls.wait()
        kind, _, value = text.partition(":")
        if kind == "wait":
            return cls.wait(float(value))
        if kind == "science":
            return cls.science(int(value))
        raise ValueError(f"unknown action {text!r}")


# Recovery-policy action codes: 0..7 are moves, 8 is wait.
WAIT_CODE = 8
HALT_CODE = -1
ALL_CODES = tuple(range(9))


def action_from_code(code: int) -> Action:
    if code == WAIT_CODE:
        return Action.wait()
    if 0 <= code < 8:
        return Action.move(code)
    raise ValueError(f"no action for code {code}")


@dataclass(frozen=True)
class RoverParams:
    panel_area: float = 1.5
    panel_eff: float = 0.30
    velocity: float = 0.05
    p_drive: float = 110.0
    p_fault: float = 80.0
    p_wait: float = 80.0
    p_hibernate: float = 30.0
    capacity: float = 7000.0
    wait_duration: float = 1800.0

    def __post_init__(self):
        for name in ("panel_area", "velocity", "p_drive", "p_fault", "p_wait",
                     "p_hibernate", "capacity", "wait_duration"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"rover parameter {name} must be positive, got {value}")
        if not 0 < self.panel_eff <= 1:
            raise ValueError(f"panel_eff must lie in (0, 1], got {self.panel_eff}")


@dataclass(frozen=True)
class FaultParams:
    rate: float = 1.0 / 5000.0            # faults per metre driven
    recovery_duration: float = 36000.0    # s

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"fault rate must be >= 0, got {self.rate}")
        if not self.recovery_duration > 0:
            raise ValueError("fault recovery duration must be positive")


@dataclass(frozen=True)
class Waypoint:
    cell: Cell
    duration: float
    energy_cost: float
    window: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "cell", (int(self.cell[0]), int(self.cell[1])))
        if self.window is not None:
            object.__setattr__(self, "window", (float(self.window[0]), float(self.window[1])))
        if not self.duration > 0:
            raise ValueError("waypoint action duration must be positive")
        if self.energy_cost < 0:
            raise ValueError("waypoint energy cost must be >= 0")


@dataclass(frozen=True)
class Haven:
    cell: Cell
    deadline: float        # time by which hibernation must reach target_energy
    target_energy: float

    def __post_init__(self):
        object.__setattr__(self, "cell", (int(self.cell[0]), int(self.cell[1])))


@dataclass(frozen=True)
class RoverState:
    cell: Cell
    time: float
    energy: float
    next_wp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cell", (int(self.cell[0]), int(self.cell[1])))
