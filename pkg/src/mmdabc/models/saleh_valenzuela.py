"""Clustered multipath channel simulator (Saleh-Valenzuela model).

Multipath components arrive in clusters. Cluster onsets follow a homogeneous
Poisson process with rate ``big_lambda`` on the observation window; within a
cluster, ray delays follow an independent Poisson process with rate
``small_lambda`` relative to the cluster onset, with the first ray pinned at
zero offset. Path gains are zero-mean complex Gaussian with conditional
variance q * exp(-T/big_gamma) * exp(-tau/small_gamma) for cluster onset T
and within-cluster offset tau. The transfer function is the sum of complex
exponentials of the path delays, plus additive measurement noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import InvalidDataError, ResourceGuardError
from ..signal import FrequencyGrid, TransferFunctionDataset
from .base import as_seed_sequence
from .noise import add_noise

__all__ = [
    "SalehValenzuelaParams",
    "SalehValenzuelaModel",
    "simulate_sv",
    "SV_PARAM_NAMES",
    "SV_PRIOR_RANGES",
]

SV_PARAM_NAMES = ("q", "big_lambda", "small_lambda", "big_gamma", "small_gamma", "sigma_w2")

# Default uniform prior box for calibration runs, keyed by parameter name.
SV_PRIOR_RANGES = {
    "q": (1e-9, 1e-7),
    "big_lambda": (5e6, 1e8),
    "small_lambda": (5e-9, 3e9),
    "big_gamma": (5e-9, 5e-8),
    "small_gamma": (5e-10, 5e-9),
    "sigma_w2": (2e-10, 2e-9),
}


@dataclass(frozen=True)
class SalehValenzuelaParams:
    """Parameters [q, big_lambda, small_lambda, big_gamma, small_gamma, sigma_w2].

    q is the mean power of the first arriving component, the lambdas are the
    cluster/ray arrival rates (1/s), the gammas the cluster/ray power decay
    constants (s), and sigma_w2 the measurement noise variance.
    """

    q: float
    big_lambda: float
    small_lambda: float
    big_gamma: float
    small_gamma: float
    sigma_w2: float

    def __post_init__(self):
        for name in ("big_lambda", "small_lambda", "big_gamma", "small_gamma"):
            val = float(getattr(self, name))
            if not (np.isfinite(val) and val > 0):
                raise InvalidDataError(f"{name} must be positive and finite, got {val!r}")
            object.__setattr__(self, name, val)
        # The variance-like parameters may be zero: q = 0 is a silent channel.
        for name in ("q", "sigma_w2"):
            val = float(getattr(self, name))
            if not (np.isfinite(val) and val >= 0):
                raise InvalidDataError(f"{name} must be nonnegative and finite, got {val!r}")
            object.__setattr__(self, name, val)

    @classmethod
    def from_vector(cls, theta) -> "SalehValenzuelaParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (6,):
            raise InvalidDataError(f"expected 6 parameters, got shape {theta.shape}")
        return cls(*theta)

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in SV_PARAM_NAMES], dtype=np.float64)


class _PathDraw(NamedTuple):
    """Flattened multipath draw across all realizations of one call."""

    realization: np.ndarray  # realization index per path
    t_cluster: np.ndarray  # onset of the path's cluster
    tau: np.ndarray  # within-cluster delay offset (0 for first rays)
    beta: np.ndarray  # complex path gain
    clusters_per_realization: np.ndarray

    @property
    def delay(self) -> np.ndarray:
        return self.t_cluster + self.tau


def _sample_paths(
    rng: np.random.Generator,
    params: SalehValenzuelaParams,
    grid: FrequencyGrid,
    n_realizations: int,
) -> _PathDraw:
    t_max = grid.t_max_s
    n_clusters = rng.poisson(params.big_lambda * t_max, size=n_realizations)
    total_c = int(n_clusters.sum())
    cluster_real = np.repeat(np.arange(n_realizations), n_clusters)
    t_cluster = rng.uniform(0.0, t_max, total_c)

    # Extra rays beyond the pinned first ray, truncated at the window end.
    window = t_max - t_cluster
    n_rays = rng.poisson(params.small_lambda * window)
    total_r = int(n_rays.sum())
    ray_cluster = np.repeat(np.arange(total_c), n_rays)
    tau_extra = rng.random(total_r) * window[ray_cluster]

    t_per_path = np.concatenate([t_cluster, t_cluster[ray_cluster]])
    tau = np.concatenate([np.zeros(total_c), tau_extra])
    variance = (
        params.q
        * np.exp(-t_per_path / params.big_gamma)
        * np.exp(-tau / params.small_gamma)
    )
    n_paths = total_c + total_r
    gauss_re = rng.standard_normal(n_paths)
    gauss_im = rng.standard_normal(n_paths)
    beta = np.sqrt(variance / 2.0) * (gauss_re + 1j * gauss_im)
    realization = np.concatenate([cluster_real, cluster_real[ray_cluster]])
    return _PathDraw(realization, t_per_path, tau, beta, n_clusters)


def _synthesize(
    beta: np.ndarray,
    delay: np.ndarray,
    realization: np.ndarray,
    n_realizations: int,
    grid: FrequencyGrid,
) -> np.ndarray:
    """Frequency response H[r, n] = sum over paths of realization r of
    beta * exp(-j 2 pi n delta_f * delay).

    The factor exp(-j 2 pi delta_f delay) is applied once per frequency step
    (a unit-modulus geometric recurrence), so the cost is one multiply and
    one segmented sum per frequency instead of a full outer exponential.
    """
    # A zero-gain sentinel path per realization keeps every segment nonempty.
    beta = np.concatenate([beta, np.zeros(n_realizations, dtype=np.complex128)])
    delay = np.concatenate([delay, np.zeros(n_realizations)])
    realization = np.concatenate([realization, np.arange(n_realizations)])

    order = np.argsort(realization, kind="stable")
    beta = np.ascontiguousarray(beta[order])
    delay = delay[order]
    counts = np.bincount(realization, minlength=n_realizations)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))

    step = np.exp(-2j * np.pi * grid.delta_f_hz * delay)
    acc = beta.copy()
    out = np.empty((n_realizations, grid.n_s), dtype=np.complex128)
    for n in range(grid.n_s):
        out[:, n] = np.add.reduceat(acc, starts)
        if n + 1 < grid.n_s:
            acc *= step
    return out


def simulate_sv(
    params: SalehValenzuelaParams,
    n_realizations: int,
    grid: FrequencyGrid,
    seed,
    max_expected_paths: float = 1e6,
) -> TransferFunctionDataset:
    """Simulate independent channel realizations on the given grid.

    Refuses to run when the expected per-realization path count
    big_lambda * small_lambda * t_max^2 exceeds ``max_expected_paths``.
    """
    if n_realizations < 1:
        raise InvalidDataError("n_realizations must be at least 1")
    expected = params.big_lambda * params.small_lambda * grid.t_max_s**2
    if expected > max_expected_paths:
        raise ResourceGuardError(
            f"expected path count {expected:.3g} per realization exceeds the cap "
            f"{max_expected_paths:.3g}; refusing to simulate"
        )
    root = as_seed_sequence(seed)
    path_seed, noise_seed = root.spawn(2)
    rng = np.random.default_rng(path_seed)
    draw = _sample_paths(rng, params, grid, n_realizations)
    h = _synthesize(draw.beta, draw.delay, draw.realization, n_realizations, grid)
    samples = add_noise(h, params.sigma_w2, noise_seed)
    return TransferFunctionDataset(grid=grid, samples=samples)


class SalehValenzuelaModel:
    """Simulator wrapper exposing the uniform model interface."""

    param_names = SV_PARAM_NAMES

    def __init__(self, max_expected_paths: float = 1e6):
        self.max_expected_paths = max_expected_paths

    def simulate(self, theta, n_realizations, grid, seed) -> TransferFunctionDataset:
        params = SalehValenzuelaParams.from_vector(theta)
        return simulate_sv(
            params, n_realizations, grid, seed, max_expected_paths=self.max_expected_paths
        )
