"""Tail-index estimation and the paired divergence heuristic."""

import math

import numpy as np
import pytest

from qbsde import DivergenceEvidence, divergence_verdict, growth_ratio, hill_estimator
from qbsde.heavytail import GROWTH_FLOOR, HILL_CEILING, HILL_FAST_PATH


def _pareto(index: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(size=n) ** (-1.0 / index)


@pytest.mark.parametrize("index", [0.6, 1.5, 3.0])
def test_hill_recovers_pareto_index(index):
    x = _pareto(index, 200_000, seed=42)
    hill, se, k = hill_estimator(x, tail_frac=0.01)
    assert k == 2000
    assert se == pytest.approx(hill / math.sqrt(k), rel=1e-12)
    assert abs(hill - index) <= 4.0 * se


def test_hill_degenerate_tail_returns_inf():
    hill, se, k = hill_estimator(np.ones(5000))
    assert math.isinf(hill) and math.isinf(se)


def test_hill_rejects_empty_or_negative():
    with pytest.raises(ValueError):
        hill_estimator(np.array([]))
    with pytest.raises(ValueError):
        hill_estimator(np.array([-1.0, 2.0, 3.0]))


def test_growth_ratio_flat_for_light_tails():
    rng = np.random.default_rng(0)
    x = rng.exponential(size=100_000)
    assert growth_ratio(x) < GROWTH_FLOOR


def test_growth_ratio_large_for_infinite_mean():
    x = _pareto(0.7, 100_000, seed=1)
    assert growth_ratio(x) > GROWTH_FLOOR


def test_divergence_verdict_fires_below_fast_path():
    ev = divergence_verdict(_pareto(0.7, 100_000, seed=2))
    assert isinstance(ev, DivergenceEvidence)
    assert ev.diverged
    assert ev.hill <= HILL_FAST_PATH
    assert "hill" in ev.reason


def test_divergence_verdict_finite_for_integrable_tail():
    ev = divergence_verdict(_pareto(3.0, 100_000, seed=3))
    assert not ev.diverged
    assert ev.hill > HILL_CEILING


def test_divergence_verdict_finite_for_lognormal():
    rng = np.random.default_rng(4)
    ev = divergence_verdict(np.exp(rng.normal(size=100_000)))
    assert not ev.diverged


def test_critical_index_needs_growth_confirmation():
    # Index just above 1 with a clearly stabilized mean must not fire
    # purely on the Hill reading.
    x = _pareto(1.08, 50_000, seed=5)
    ev = divergence_verdict(x)
    if ev.hill > HILL_FAST_PATH and ev.growth < GROWTH_FLOOR:
        assert not ev.diverged


def test_thresholds_are_ordered():
    assert HILL_FAST_PATH < HILL_CEILING < GROWTH_FLOOR
