import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccmission.model import Action, RoverState
from ccmission.roverdyn import (available_actions, hibernation_outcome, in_operational, is_safe,
                                nominal_transition, safe_energy_threshold)

from conftest import flat_scenario

T0 = 1882787600.0


def test_interior_cell_has_nine_actions():
    s = flat_scenario(waypoints=((4, 4),))
    acts = available_actions(RoverState((2, 2), T0, 1000.0), s)
    assert len(acts) == 9
    assert sum(a.kind == "move" for a in acts) == 8


def test_science_offered_at_due_waypoint():
    s = flat_scenario(waypoints=((2, 2),))
    acts = available_actions(RoverState((2, 2), T0, 3000.0, 0), s)
    assert len(acts) == 10
    assert Action.science(0) in acts
    # Already done: no science.
    assert Action.science(0) not in available_actions(RoverState((2, 2), T0, 3000.0, 1), s)


def test_science_absent_when_window_closed():
    s = flat_scenario(waypoints=((2, 2),), window=(T0 + 36000.0, T0 + 72000.0))
    acts = available_actions(RoverState((2, 2), T0, 3000.0, 0), s)
    assert len(acts) == 9
    assert Action.science(0) not in acts
    assert Action.science(0) in available_actions(RoverState((2, 2), T0 + 36000.0, 3000.0, 0), s)


def test_corner_cell_moves():
    s = flat_scenario()
    acts = available_actions(RoverState((0, 0), T0, 1000.0), s)
    assert sorted(str(a) for a in acts if a.kind == "move") == ["E", "S", "SE"]


def test_wait_in_shade_drains_40_wh():
    s = flat_scenario(fraction=0.0)
    y = nominal_transition(RoverState((1, 1), T0, 1000.0), Action.wait(), s)
    assert y.energy == pytest.approx(960.0, abs=1e-12)
    assert y.time == T0 + 1800.0


def test_move_in_full_sun():
    s = flat_scenario(fraction=1.0)
    y = nominal_transition(RoverState((1, 1), T0, 1000.0), Action.move(2), s)
    # 240 m at 0.05 m/s: 4800 s; gain 1367*1.5*0.3*4800/3600 = 820.2, drive 110*4800/3600.
    assert y.time == pytest.approx(T0 + 4800.0)
    assert y.cell == (1, 2)
    assert y.energy - 1000.0 == pytest.approx(820.2 - 146.666666666667, abs=1e-9)
    assert y.energy - 1000.0 == pytest.approx(673.53, abs=0.01)
    top = nominal_transition(RoverState((1, 1), T0, 6900.0), Action.move(2), s)
    assert top.energy == 7000.0


def test_science_costs_exactly_its_energy():
    s = flat_scenario(fraction=0.0, waypoints=((2, 2),))
    y = nominal_transition(RoverState((2, 2), T0, 3000.0, 0), Action.science(0), s)
    assert y.energy == pytest.approx(1000.0, abs=1e-12)
    assert y.next_wp == 1
    assert y.time == T0 + 7200.0


def test_hibernation_in_shade():
    s = flat_scenario(fraction=0.0, n_frames=10)
    b, floor = hibernation_outcome((0, 0), T0, 1000.0, s)
    assert b == pytest.approx(700.0, abs=1e-9)
    assert floor == b


def test_hibernation_empty_interval():
    s = flat_scenario(fraction=0.0, n_frames=10)
    end = s.havens[0].deadline
    assert hibernation_outcome((0, 0), end, 1234.0, s) == (1234.0, 1234.0)


def test_hibernation_saturates_in_sun():
    s = flat_scenario(fraction=1.0, n_frames=48)
    # Net charge 1367*0.45 - 30 W; from 1000 Wh the battery fills in under 11 h.
    b, floor = hibernation_outcome((0, 0), T0, 1000.0, s)
    assert b == 7000.0
    assert floor == 1000.0


def test_is_safe_boundaries():
    s = flat_scenario(fraction=0.0, n_frames=10, haven_target=600.0)
    need = safe_energy_threshold((0, 0), T0, s)
    assert need == pytest.approx(900.0, abs=1e-9)
    assert is_safe(RoverState((0, 0), T0, need), s)
    assert not is_safe(RoverState((0, 0), T0, need - 1e-3), s)
    assert not is_safe(RoverState((2, 2), T0, 7000.0), s)


def test_shaded_haven_floor_below_bmin_not_safe():
    # Target is low but the long shaded hibernation drains below b_min first.
    s = flat_scenario(fraction=0.0, n_frames=25, haven_target=100.0, b_min=500.0)
    x = RoverState((0, 0), T0, 1100.0)
    b, floor = hibernation_outcome((0, 0), T0, 1100.0, s)
    assert b >= 100.0 and floor < s.b_min
    assert not is_safe(x, s)


def test_operational_region():
    s = flat_scenario()
    assert in_operational(RoverState((1, 1), T0, s.b_min), s)
    assert not in_operational(RoverState((1, 1), s.t_max + 1.0, 1000.0), s)
    assert not in_operational(RoverState((1, 1), T0, s.b_min - 0.1), s)


def test_medium_start_is_operational(medium):
    assert in_operational(medium.start, medium)
    assert medium.start.energy == 1000.0


@settings(max_examples=80, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 60000.0), st.floats(500.0, 7000.0),
       st.integers(0, 9))
def test_transition_time_strictly_increases(frac, dt, b, code):
    s = flat_scenario(fraction=frac)
    x = RoverState((2, 2), T0 + dt, b)
    a = Action.wait() if code >= 8 else Action.move(code)
    y = nominal_transition(x, a, s)
    assert y.time > x.time
    assert y.energy <= s.rover.capacity


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=48, max_size=48), st.floats(0.0, 150000.0))
def test_safe_threshold_matches_hibernation_search(fracs, dt):
    frames = np.asarray(fracs)[:, None, None] * np.ones((1, 5, 5))
    s = flat_scenario(frames=frames, haven_target=2000.0)
    t = T0 + dt
    need = safe_energy_threshold((0, 0), t, s)
    if not math.isfinite(need):
        assert hibernation_outcome((0, 0), t, s.b_max, s)[0] < 2000.0 - 1e-6 \
            or hibernation_outcome((0, 0), t, s.b_max, s)[1] < s.b_min - 1e-6
        return
    b_ok = hibernation_outcome((0, 0), t, need + 1e-6, s)
    assert b_ok[0] >= 2000.0 - 1e-6 and b_ok[1] >= s.b_min - 1e-6
    if need > s.b_min + 1e-3:
        b_bad = hibernation_outcome((0, 0), t, need - 1e-3, s)
        assert b_bad[0] < 2000.0 or b_bad[1] < s.b_min
