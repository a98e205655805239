"""Shared fixtures: one default grid and two ensemble sizes.

Session scope keeps the Brownian sampling cost paid once; every test that
mutates nothing may share them.  Tests needing other shapes build their own.
"""

import pytest

from qbsde import build_grid, sample_paths

BASE_SEED = 20240817


@pytest.fixture(scope="session")
def grid():
    return build_grid(1.0, 64)


@pytest.fixture(scope="session")
def ens_small(grid):
    """2000 paths: enough for exact identities and smoke statistics."""
    return sample_paths(grid, 2000, seed=BASE_SEED)


@pytest.fixture(scope="session")
def ens_mid(grid):
    """20000 paths: enough for calibrated Monte Carlo tolerances."""
    return sample_paths(grid, 20000, seed=BASE_SEED)
