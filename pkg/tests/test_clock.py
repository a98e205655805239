"""Clock exit engine: hitting times, censoring, exit-time transforms."""

import math

import numpy as np
import pytest

from qbsde import exit_time_exp_moment, hitting_time
from qbsde.core import simulate_two_sided_exit


def test_hitting_time_basic_laws(ens_mid, grid):
    clock = hitting_time(ens_mid)
    assert np.all(clock.H[clock.exited] > 0.0)
    # tau = T - (T/2) exp(-H) lies in (T/2, T).
    assert np.all(clock.tau > grid.T / 2.0)
    assert np.all(clock.tau < grid.T)
    assert set(np.unique(clock.sign[clock.exited])) <= {-1.0, 1.0}
    # Two-sided exit survival decays like exp(-pi^2 u / 8); at the default
    # clock depth ~13.2 censoring is astronomically unlikely.
    assert clock.censored_fraction == 0.0


def test_hitting_time_deterministic_in_seed(ens_mid):
    a = hitting_time(ens_mid)
    b = hitting_time(ens_mid)
    assert np.array_equal(a.H, b.H)


def test_exit_mean_matches_known_value(ens_mid):
    # E[H] = E[inf u: |B_u| = 1] = 1 for the unit two-sided exit.
    clock = hitting_time(ens_mid)
    se = clock.H.std(ddof=1) / math.sqrt(clock.H.size)
    assert abs(clock.H.mean() - 1.0) <= 4.0 * se


@pytest.mark.parametrize("c", [0.3, 0.5])
def test_exit_exp_moment_against_cosine_law(ens_mid, c):
    # E[exp(c^2 pi^2/8 H)] = 1/cos(c pi/2) for c in (0,1).
    clock = hitting_time(ens_mid)
    mean, se = exit_time_exp_moment(clock, c)
    target = 1.0 / math.cos(c * math.pi / 2.0)
    assert abs(mean - target) <= max(4.0 * se, 0.02 * target)


def test_drifted_clock_biases_exit_side(ens_mid):
    clock = hitting_time(ens_mid, drift_slope=1.0, alpha=0.8)
    up = float(np.mean(clock.sign[clock.exited] > 0))
    assert up > 0.6  # positive drift pushes the exit to the upper barrier
    assert clock.drift_slope == 1.0


def test_alpha_validation(ens_small):
    with pytest.raises(ValueError):
        hitting_time(ens_small, alpha=1.5)


def test_two_sided_exit_engine_contract():
    exits = simulate_two_sided_exit(4000, dv=1e-3, u_max=6.0, seed=11,
                                    stream=("unit-test",))
    # Bridge-corrected exits land exactly on a barrier.
    assert np.allclose(np.abs(exits.x_exit[exits.exited]), 1.0, atol=1e-12)
    assert np.all(exits.u_exit <= 6.0 + 1e-3)
    # Censored survivors sit at the horizon with |state| < 1.
    cen = exits.censored
    if cen.any():
        assert np.all(np.abs(exits.x_exit[cen]) < 1.0)
        assert np.allclose(exits.u_exit[cen], 6.0, atol=1e-12)
    # Survival at u=6 is about exp(-pi^2 * 6 / 8) ~ 6e-4.
    assert exits.censored_fraction < 0.01


def test_stop_u_truncates_exit():
    stop = np.full(1000, 0.5)
    exits = simulate_two_sided_exit(1000, dv=1e-3, u_max=6.0, seed=12,
                                    stream=("unit-test-cut",), stop_u=stop)
    assert np.all(exits.u_exit <= 0.5 + 1e-9)
    # Paths cut before reaching a barrier keep their interior state.
    interior = ~exits.exited & ~exits.censored
    assert interior.any()
    assert np.all(np.abs(exits.x_exit[interior]) < 1.0)
