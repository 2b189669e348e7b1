from pathlib import Path

import numpy as np
import pytest

from ccmission.envmodel import IlluminationSeries, Scenario, TerrainGrid, load_scenario
from ccmission.model import FaultParams, Haven, RoverParams, RoverState, Waypoint
from ccmission.recovery import build_recovery
from ccmission.synthetic import MISSION_T_MIN

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


def flat_scenario(size=5, fraction=0.0, n_frames=48, alpha=1.0 / 5000.0, havens=((0, 0),),
                  waypoints=((2, 2),), start=(0, 0), start_energy=1000.0, haven_target=600.0,
                  elevation=None, resolution=240.0, rover=None, frames=None, window=None,
                  fault_recovery=36000.0, b_min=500.0, b_max=7000.0) -> Scenario:
    """Hand-built scenario on a flat grid with uniform (or given) illumination."""
    elev = np.zeros((size, size)) if elevation is None else np.asarray(elevation, dtype=float)
    ts = MISSION_T_MIN + 3600.0 * np.arange(n_frames)
    if frames is None:
        frames = np.full((n_frames, size, size), fraction)
    return Scenario(
        terrain=TerrainGrid(elev, resolution),
        illum=IlluminationSeries(ts, frames, 3600.0),
        waypoints=tuple(Waypoint(c, 7200.0, 2000.0, window) for c in waypoints),
        havens=tuple(Haven(c, MISSION_T_MIN + 3600.0 * n_frames, haven_target) for c in havens),
        t_min=MISSION_T_MIN, t_max=MISSION_T_MIN + 3600.0 * n_frames,
        b_min=b_min, b_max=b_max,
        rover=rover or RoverParams(), fault=FaultParams(alpha, fault_recovery),
        start=RoverState(start, MISSION_T_MIN, start_energy, 0),
    )


@pytest.fixture(scope="session")
def medium():
    return load_scenario(SCENARIOS / "medium" / "manifest.json")


@pytest.fixture(scope="session")
def medium_policy(medium):
    return build_recovery(medium)


@pytest.fixture(scope="session")
def medium_micro_scenario():
    return load_scenario(SCENARIOS / "medium" / "micro" / "manifest.json")


@pytest.fixture(scope="session")
def medium_planner(medium, medium_policy):
    """Shared planner at the 0.02 bound; its plan cache persists across tests."""
    from ccmission.treeplan import Planner
    return Planner(medium, medium_policy, 0.02)
