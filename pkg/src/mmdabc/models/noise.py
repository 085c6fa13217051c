"""Additive measurement noise."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidDataError
from .base import as_seed_sequence

__all__ = ["add_noise"]


def add_noise(h, sigma_w2: float, seed) -> np.ndarray:
    """Add iid circularly symmetric complex Gaussian noise to a matrix.

    Each entry receives zero-mean noise of total variance ``sigma_w2``
    (variance ``sigma_w2 / 2`` in the real and imaginary parts). With
    ``sigma_w2 == 0`` the input is returned unchanged, bit for bit.
    """
    arr = np.asarray(h, dtype=np.complex128)
    if not (np.isfinite(sigma_w2) and sigma_w2 >= 0):
        raise InvalidDataError(f"sigma_w2 must be nonnegative and finite, got {sigma_w2!r}")
    if sigma_w2 == 0:
        return arr.copy()
    rng = np.random.default_rng(as_seed_sequence(seed))
    scale = np.sqrt(sigma_w2 / 2.0)
    noise = rng.standard_normal(arr.shape) + 1j * rng.standard_normal(arr.shape)
    return arr + scale * noise
