"""Shared fixtures and random-problem generators for the test suite."""

import numpy as np
import pytest

from stepstress.model import (
    IntervalData,
    ModelParams,
    StressPlan,
    cell_probabilities,
)

# Two-level simulation design used throughout the simulation studies:
# normal-use-adjacent stresses 30 and 40, stress change at 18, termination
# at 52, inspections every 4 time units (plus the change time).
SIM_PLAN = StressPlan(
    stress_levels=[30.0, 40.0],
    change_times=[18.0, 52.0],
    inspection_times=[6, 10, 14, 18, 20, 24, 28, 32, 36, 40, 44, 48, 52],
)
SIM_THETA = ModelParams(5.3, -0.05, 1.5)


@pytest.fixture
def sim_plan():
    return SIM_PLAN


@pytest.fixture
def sim_theta():
    return SIM_THETA


def random_problem(rng, k_max=3):
    """Random (params, plan) pair with 1..k_max stress levels.

    Times and scales are matched so cell probabilities are non-degenerate
    for most draws; extreme-but-valid corners still occur.
    """
    k = int(rng.integers(1, k_max + 1))
    n_times = int(rng.integers(k + 2, k + 8))
    times = np.cumsum(rng.uniform(0.3, 1.5, n_times))
    if k > 1:
        cut_positions = np.sort(
            rng.choice(np.arange(n_times - 1), size=k - 1, replace=False)
        )
        tau = np.append(times[cut_positions], times[-1])
    else:
        tau = times[-1:]
    x = np.cumsum(rng.uniform(0.2, 1.0, k))
    plan = StressPlan(stress_levels=x, change_times=tau, inspection_times=times)
    a1 = rng.uniform(-1.2, -0.05)
    a0 = float(np.log(rng.uniform(0.3, 1.5) * times[-1]))
    eta = rng.uniform(0.6, 2.5)
    return ModelParams(a0, a1, eta), plan


def expected_count_data(params, plan, total):
    """Noise-free data: cell counts exactly proportional to the model."""
    pi = cell_probabilities(params, plan)
    return IntervalData(counts=pi * total, total=total)


def fd_cell_gradient(params, plan, step=1e-6):
    """Central finite differences of cell_probabilities in (a0, a1, eta)."""
    theta = params.as_array()
    out = np.empty((plan.n_cells, 3))
    for m in range(3):
        delta = step * (1.0 + abs(theta[m]))
        hi = theta.copy()
        lo = theta.copy()
        hi[m] += delta
        lo[m] -= delta
        pi_hi = cell_probabilities(ModelParams(*hi), plan)
        pi_lo = cell_probabilities(ModelParams(*lo), plan)
        out[:, m] = (pi_hi - pi_lo) / (2 * delta)
    return out
