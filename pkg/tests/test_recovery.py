from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccmission.envmodel import TerrainGrid
from ccmission.model import RoverParams, RoverState
from ccmission.oracle import lattice_reachability, micro_lattice, micro_scenario
from ccmission.recovery import (FAIL, SAFE, LatticeError, StateLattice, build_recovery,
                                check_lattice, conservative_index, load_policy, save_policy)

from conftest import flat_scenario

T0 = 1882787600.0


@pytest.fixture(scope="module")
def micro():
    s = micro_scenario(3, alpha=1.0 / 400.0, havens=((0, 0), (3, 2)))
    lat = micro_lattice(s)
    return s, lat, build_recovery(s, lat)


class TestConservativeIndex:
    def test_exact_lattice_point(self, micro):
        s, lat, _ = micro
        x = RoverState((2, 2), lat.time_points[3], lat.energy_points[4])
        assert conservative_index(x, lat, s) == (2, 2, 3, 4)

    def test_time_rounds_up(self, micro):
        s, lat, _ = micro
        x = RoverState((2, 2), lat.time_points[3] + 1.0, lat.energy_points[4])
        assert conservative_index(x, lat, s) == (2, 2, 4, 4)

    def test_energy_rounds_down(self, micro):
        s, lat, _ = micro
        x = RoverState((2, 2), lat.time_points[3], lat.energy_points[4] - 1.0)
        assert conservative_index(x, lat, s) == (2, 2, 3, 3)

    def test_below_floor_fails(self, micro):
        s, lat, _ = micro
        assert conservative_index(RoverState((2, 2), s.t_min, s.b_min - 0.1), lat, s) is FAIL

    def test_safe_haven_state(self, micro):
        s, lat, _ = micro
        assert conservative_index(RoverState((0, 0), s.t_min, s.b_max), lat, s) is SAFE


class TestValues:
    def test_safe_has_value_one_and_halts(self, micro):
        s, lat, pol = micro
        x = RoverState((0, 0), s.t_min, s.b_max)
        assert pol.value(x) == 1.0
        assert pol.risk(x) == 0.0
        assert pol.greedy_action(x) is None

    def test_outside_region_has_risk_one(self, micro):
        s, _, pol = micro
        assert pol.risk(RoverState((1, 1), s.t_max + 1.0, 300.0)) == 1.0
        assert pol.risk(RoverState((1, 1), s.t_min, s.b_min - 1.0)) == 1.0

    def test_doomed_state(self):
        # All dark, no way to gain energy, lowest energy bin far from the haven.
        s = flat_scenario(fraction=0.0, n_frames=12, havens=((0, 0),), start=(0, 0),
                          haven_target=600.0, start_energy=3000.0)
        lat = StateLattice.for_scenario(s, 1800.0, 150.0)
        pol = build_recovery(s, lat)
        assert pol.value_at((4, 4), s.t_min, s.b_min) == 0.0

    def test_values_are_probabilities(self, micro):
        _, _, pol = micro
        assert np.all((pol.values >= 0.0) & (pol.values <= 1.0))

    def test_alpha_zero_matches_reachability(self):
        for seed in range(4):
            s = micro_scenario(seed, alpha=0.0, havens=((0, 0), (3, 2)))
            lat = micro_lattice(s)
            pol = build_recovery(s, lat)
            assert set(np.unique(pol.values)) <= {0.0, 1.0}
            np.testing.assert_array_equal(pol.values, lattice_reachability(s, lat))

    def test_only_move_east_survives(self):
        # Two-cell corridor with the haven to the east; from the last-but-one
        # time point, waiting runs out the clock.
        elev = np.zeros((3, 3))
        rover = RoverParams(velocity=240.0 / 1800.0)
        s = flat_scenario(size=3, fraction=1.0, n_frames=6, havens=((1, 2),), start=(1, 2),
                          waypoints=(), elevation=elev, rover=rover, haven_target=600.0,
                          alpha=0.0)
        blocked = np.ones((3, 3), dtype=bool)
        blocked[1, 1] = blocked[1, 2] = False
        s = replace(s, terrain=TerrainGrid(elev, 240.0, blocked=blocked), cache={})
        lat = StateLattice.for_scenario(s, 1800.0, 150.0)
        pol = build_recovery(s, lat)
        t = s.t_max - 1800.0
        x = RoverState((1, 1), t, 1000.0)
        assert pol.value(x) == 1.0
        assert str(pol.greedy_action(x)) == "E"

    def test_iterative_mode_agrees(self, micro):
        s, lat, pol = micro
        again = build_recovery(s, lat, mode="iterate")
        np.testing.assert_array_equal(again.values, pol.values)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 50), st.floats(0.0, 0.01))
    def test_value_monotone_in_energy(self, seed, alpha):
        s = micro_scenario(seed, alpha=alpha, havens=((0, 0),))
        pol = build_recovery(s, micro_lattice(s))
        assert np.all(np.diff(pol.values, axis=2) >= -1e-12)


class TestPersistence:
    def test_round_trip_bytes(self, micro, tmp_path):
        s, lat, pol = micro
        save_policy(pol, tmp_path / "a.bin")
        save_policy(build_recovery(s, lat), tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
        back = load_policy(tmp_path / "a.bin", s)
        np.testing.assert_array_equal(back.values, pol.values)
        np.testing.assert_array_equal(back.actions, pol.actions)

    def test_hash_mismatch(self, micro, tmp_path):
        s, lat, pol = micro
        save_policy(pol, tmp_path / "a.bin")
        other = micro_scenario(4)
        with pytest.raises(ValueError, match="hash"):
            load_policy(tmp_path / "a.bin", other)

    def test_coarse_time_rejected(self, micro):
        s, _, _ = micro
        with pytest.raises(LatticeError, match="time-res"):
            check_lattice(s, StateLattice.for_scenario(s, 5000.0, 50.0))
