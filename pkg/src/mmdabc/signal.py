"""Deterministic signal processing for transfer-function measurements.

A measurement is a complex frequency response sampled at ``n_s`` points
spaced ``delta_f_hz`` apart over a bandwidth ``bandwidth_hz``. Its
time-domain counterpart lives on the periodic window ``[0, t_max)`` with
``t_max = 1/delta_f``. Everything here is a pure function of its inputs:
transform to the time domain, temporal moments and their logs, averaged
power delay profiles, and the standardized delay statistics used for
validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSignalError,
    DimensionMismatchError,
    InvalidDataError,
    NumericalDomainError,
)

__all__ = [
    "FrequencyGrid",
    "TransferFunctionDataset",
    "TimeDomainSignal",
    "LogMomentMatrix",
    "ValidationStats",
    "to_time_domain",
    "temporal_moments",
    "log_moment_matrix",
    "apdp",
    "standardized_moments",
    "snr_db",
]


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform frequency sampling: ``n_s`` points spanning ``bandwidth_hz``.

    The derived quantities are properties so they can never drift out of
    sync with the defining fields: ``delta_f_hz = bandwidth_hz / (n_s - 1)``
    and ``t_max_s = 1 / delta_f_hz``.
    """

    n_s: int
    bandwidth_hz: float

    def __post_init__(self):
        if not isinstance(self.n_s, (int, np.integer)) or isinstance(self.n_s, bool):
            raise InvalidDataError(f"n_s must be an integer, got {self.n_s!r}")
        if self.n_s < 2:
            raise InvalidDataError(f"n_s must be at least 2, got {self.n_s}")
        b = float(self.bandwidth_hz)
        if not np.isfinite(b) or b <= 0:
            raise InvalidDataError(f"bandwidth_hz must be positive and finite, got {b!r}")
        object.__setattr__(self, "n_s", int(self.n_s))
        object.__setattr__(self, "bandwidth_hz", b)

    @property
    def delta_f_hz(self) -> float:
        return self.bandwidth_hz / (self.n_s - 1)

    @property
    def t_max_s(self) -> float:
        return 1.0 / self.delta_f_hz

    def time_points(self) -> np.ndarray:
        """The uniform time grid t_k = k * t_max / n_s, k = 0..n_s-1."""
        return np.arange(self.n_s) * (self.t_max_s / self.n_s)


@dataclass(frozen=True)
class TransferFunctionDataset:
    """Complex frequency responses, one realization per row.

    ``samples`` has shape (n_obs, grid.n_s); all entries must be finite.
    """

    grid: FrequencyGrid
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        if arr.ndim != 2:
            raise InvalidDataError(f"samples must be a 2-D matrix, got ndim={arr.ndim}")
        if arr.shape[0] < 1:
            raise InvalidDataError("dataset needs at least one realization")
        if arr.shape[1] != self.grid.n_s:
            raise DimensionMismatchError(
                f"rows have {arr.shape[1]} frequency points, grid expects {self.grid.n_s}"
            )
        if not np.isfinite(arr).all():
            raise InvalidDataError("samples contain non-finite entries")
        object.__setattr__(self, "samples", arr)

    @property
    def n_obs(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class TimeDomainSignal:
    """A complex signal sampled uniformly on [0, t_max)."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.complex128)
        if arr.ndim != 1:
            raise InvalidDataError("time-domain values must be a vector")
        if arr.size < self.grid.n_s:
            raise InvalidDataError(
                f"need at least {self.grid.n_s} time samples, got {arr.size}"
            )
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class LogMomentMatrix:
    """Log temporal moments, one row z = [ln m0, ..., ln m_{I-1}] per realization."""

    i_moments: int
    rows: np.ndarray

    def __post_init__(self):
        if self.i_moments < 1:
            raise InvalidDataError("i_moments must be at least 1")
        arr = np.asarray(self.rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != self.i_moments:
            raise DimensionMismatchError(
                f"rows must be (N, {self.i_moments}), got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise InvalidDataError("log moments contain non-finite entries")
        object.__setattr__(self, "rows", arr)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class ValidationStats:
    """Received power, mean delay, and rms delay spread of one realization."""

    p0: float
    mean_delay_s: float
    rms_delay_spread_s: float = field(default=0.0)


def _as_complex_row(tf_row, n_s: int) -> np.ndarray:
    row = np.asarray(tf_row, dtype=np.complex128)
    if row.ndim != 1:
        raise InvalidDataError("transfer-function row must be a vector")
    if row.size != n_s:
        raise DimensionMismatchError(f"row has {row.size} points, grid expects {n_s}")
    if not np.isfinite(row).all():
        raise InvalidDataError("transfer-function row contains non-finite entries")
    return row


def to_time_domain(tf_row, grid: FrequencyGrid) -> TimeDomainSignal:
    """Inverse transform of one frequency response onto the uniform time grid.

    Computes y(t_k) = (1/N_s) sum_n Y_n exp(j 2 pi n df t_k) at
    t_k = k t_max / N_s. With as many time samples as frequency points this
    is exactly the inverse DFT.
    """
    row = _as_complex_row(tf_row, grid.n_s)
    return TimeDomainSignal(grid=grid, values=np.fft.ifft(row))


def _time_domain_matrix(ds: TransferFunctionDataset) -> np.ndarray:
    # Row-wise counterpart of to_time_domain, used by the dataset operations.
    return np.fft.ifft(ds.samples, axis=1)


def _moment_weights(grid: FrequencyGrid, i_moments: int) -> np.ndarray:
    # (n_t, I) matrix of t_k^i; left Riemann sum weights are just delta_t.
    t = grid.time_points()
    return np.power.outer(t, np.arange(i_moments))


def _moments_of_power(power: np.ndarray, grid: FrequencyGrid, i_moments: int) -> np.ndarray:
    delta_t = grid.t_max_s / grid.n_s
    return power @ _moment_weights(grid, i_moments) * delta_t


def temporal_moments(sig: TimeDomainSignal, i_moments: int) -> np.ndarray:
    """Temporal moments m_i = integral of t^i |y(t)|^2 over [0, t_max).

    The integral is a left Riemann sum on the signal's uniform time grid,
    which is exact for m_0 on the periodic window.
    """
    if i_moments < 1:
        raise InvalidDataError("i_moments must be at least 1")
    power = np.abs(sig.values) ** 2
    return _moments_of_power(power, sig.grid, i_moments)


def log_moment_matrix(ds: TransferFunctionDataset, i_moments: int) -> LogMomentMatrix:
    """Map every realization to its vector of log temporal moments."""
    if i_moments < 1:
        raise InvalidDataError("i_moments must be at least 1")
    power = np.abs(_time_domain_matrix(ds)) ** 2
    moments = _moments_of_power(power, ds.grid, i_moments)
    bad = ~(moments > 0.0)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise DegenerateSignalError(
            f"realization {row} has a non-positive temporal moment; "
            "log moments are undefined for zero-energy signals"
        )
    return LogMomentMatrix(i_moments=i_moments, rows=np.log(moments))


def apdp(ds: TransferFunctionDataset) -> np.ndarray:
    """Averaged power delay profile: mean of |y(t_k)|^2 over realizations."""
    power = np.abs(_time_domain_matrix(ds)) ** 2
    return power.mean(axis=0)


def standardized_moments(m) -> ValidationStats:
    """Received power P0, mean delay, and rms delay spread from raw moments.

    P0 = m0, mean delay = m1/m0, and the spread is the square root of
    m2/m0 - (m1/m0)^2. A slightly negative radicand from rounding is clamped
    to zero; anything materially negative is a domain error.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1 or m.size < 3:
        raise InvalidDataError("need at least the first three moments m0, m1, m2")
    if not (m[0] > 0):
        raise NumericalDomainError(f"m0 must be positive, got {m[0]!r}")
    mean_delay = m[1] / m[0]
    radicand = m[2] / m[0] - mean_delay**2
    scale = max(abs(m[2] / m[0]), mean_delay**2, np.finfo(float).tiny)
    if radicand < 0:
        if radicand < -1e-12 * scale:
            raise NumericalDomainError(
                f"negative delay-spread radicand {radicand!r} exceeds rounding tolerance"
            )
        radicand = 0.0
    return ValidationStats(
        p0=float(m[0]),
        mean_delay_s=float(mean_delay),
        rms_delay_spread_s=float(np.sqrt(radicand)),
    )


def snr_db(mean_m0_noiseless: float, bandwidth_hz: float, sigma_w2: float) -> float:
    """Signal-to-noise ratio 10 log10(mean_m0 * B / sigma_w2) in dB."""
    for name, val in (
        ("mean_m0_noiseless", mean_m0_noiseless),
        ("bandwidth_hz", bandwidth_hz),
        ("sigma_w2", sigma_w2),
    ):
        if not (np.isfinite(val) and val > 0):
            raise NumericalDomainError(f"{name} must be positive and finite, got {val!r}")
    return 10.0 * np.log10(mean_m0_noiseless * bandwidth_hz / sigma_w2)
