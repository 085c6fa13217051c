"""Tiny simulators for exercising the calibration engine cheaply.

Defined at module level (not inside test functions) so process pools can
pickle them by reference.
"""

import numpy as np

from mmdabc.errors import ResourceGuardError
from mmdabc.models.base import as_seed_sequence
from mmdabc.signal import TransferFunctionDataset


class ImpulseModel:
    """Two-parameter toy channel: a single delayed impulse.

    theta = (amplitude, position): each realization is a pure delay at
    index round(position * (n_s - 1)) with a lognormal-jittered amplitude,
    so the log moments respond smoothly to both parameters.
    """

    param_names = ("amplitude", "position")

    def __init__(self, jitter: float = 0.05):
        self.jitter = jitter

    def simulate(self, theta, n_realizations, grid, seed):
        rng = np.random.default_rng(as_seed_sequence(seed))
        amp = float(theta[0]) * np.exp(self.jitter * rng.standard_normal(n_realizations))
        k = int(round(float(theta[1]) * (grid.n_s - 1)))
        k = min(max(k, 1), grid.n_s - 1)
        cols = np.arange(grid.n_s)
        rows = amp[:, None] * np.exp(-2j * np.pi * cols * k / grid.n_s)
        return TransferFunctionDataset(grid=grid, samples=rows)


class BudgetedModel:
    """Wraps ImpulseModel and fails once a fixed call budget is spent."""

    param_names = ImpulseModel.param_names

    def __init__(self, budget: int):
        self.inner = ImpulseModel()
        self.remaining = budget

    def simulate(self, theta, n_realizations, grid, seed):
        if self.remaining <= 0:
            raise ResourceGuardError("simulation budget exhausted")
        self.remaining -= 1
        return self.inner.simulate(theta, n_realizations, grid, seed)
