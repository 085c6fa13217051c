"""Common plumbing for the forward simulators."""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from ..signal import FrequencyGrid, TransferFunctionDataset

__all__ = ["ModelInterface", "as_seed_sequence"]


@runtime_checkable
class ModelInterface(Protocol):
    """Uniform simulator contract used by the calibration engine.

    Implementations must be pure: identical (theta, n_realizations, grid,
    seed) give bit-identical datasets, independent of scheduling.
    """

    param_names: tuple[str, ...]

    def simulate(
        self, theta, n_realizations: int, grid: FrequencyGrid, seed
    ) -> TransferFunctionDataset:
        ...


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Coerce an integer or SeedSequence into a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))
