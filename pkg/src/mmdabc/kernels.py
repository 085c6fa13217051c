"""Squared-exponential kernel and maximum mean discrepancy estimators.

The MMD between two point sets is estimated with the standard unbiased
U-statistic built from pairwise kernel sums. The kernel lengthscale comes
from the median heuristic, l = sqrt(median pairwise squared distance / 2).
For the special case of two univariate Gaussians the squared MMD has a
closed form, which serves as an oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import (
    DegenerateDataError,
    DimensionMismatchError,
    GridMismatchError,
    InvalidDataError,
)
from .signal import TransferFunctionDataset, log_moment_matrix

__all__ = [
    "Lengthscale",
    "Mmd2Estimate",
    "se_kernel",
    "median_heuristic",
    "mmd2_unbiased",
    "mmd2_gaussian_closed_form",
    "mmd2_between_datasets",
]

# Above this many rows the Gram matrices are accumulated in fixed-size blocks
# instead of being held in memory whole.
_GRAM_BLOCK = 4096


@dataclass(frozen=True)
class Lengthscale:
    """Strictly positive kernel lengthscale."""

    l: float

    def __post_init__(self):
        val = float(self.l)
        if not np.isfinite(val) or val <= 0:
            raise InvalidDataError(f"lengthscale must be positive and finite, got {val!r}")
        object.__setattr__(self, "l", val)


@dataclass(frozen=True)
class Mmd2Estimate:
    """Unbiased squared-MMD estimate between two point sets.

    The value may be negative: the estimator is unbiased, not nonnegative.
    """

    value: float
    n_x: int
    n_y: int
    lengthscale: Lengthscale

    def __post_init__(self):
        if self.n_x < 2 or self.n_y < 2:
            raise InvalidDataError("both point sets must have at least 2 points")


def _lengthscale_value(l) -> float:
    if isinstance(l, Lengthscale):
        return l.l
    return Lengthscale(float(l)).l


def se_kernel(x, x2, l) -> float:
    """Squared-exponential kernel exp(-||x - x2||^2 / l^2)."""
    xa = np.asarray(x, dtype=np.float64)
    xb = np.asarray(x2, dtype=np.float64)
    if xa.shape != xb.shape or xa.ndim != 1:
        raise DimensionMismatchError(
            f"kernel arguments must be equal-length vectors, got {xa.shape} and {xb.shape}"
        )
    ls = _lengthscale_value(l)
    d2 = float(np.sum((xa - xb) ** 2))
    return float(np.exp(-d2 / ls**2))


def median_heuristic(X) -> Lengthscale:
    """Lengthscale l = sqrt(med / 2), med over distinct-pair squared distances.

    Raises a degenerate-data error when the median is zero (at least half of
    all pairs coincide), since the resulting kernel would be ill-defined.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise InvalidDataError("median heuristic needs a matrix with at least 2 rows")
    if not np.isfinite(arr).all():
        raise InvalidDataError("median heuristic input contains non-finite entries")
    med = float(np.median(pdist(arr, "sqeuclidean")))
    if med <= 0.0:
        raise DegenerateDataError(
            "median pairwise squared distance is zero; the point set is degenerate"
        )
    return Lengthscale(np.sqrt(med / 2.0))


def _gram_sums(A: np.ndarray, B: np.ndarray, l2: float) -> float:
    """Sum of exp(-||a-b||^2/l2) over all pairs, accumulated in fixed blocks."""
    total = 0.0
    for i in range(0, A.shape[0], _GRAM_BLOCK):
        ai = A[i : i + _GRAM_BLOCK]
        for j in range(0, B.shape[0], _GRAM_BLOCK):
            bj = B[j : j + _GRAM_BLOCK]
            total += float(np.exp(-cdist(ai, bj, "sqeuclidean") / l2).sum())
    return total


def _self_gram_sum(A: np.ndarray, l2: float) -> float:
    """Off-diagonal sum of the self Gram matrix (diagonal terms are exactly 1)."""
    return _gram_sums(A, A, l2) - A.shape[0]


def mmd2_unbiased(X, Y, l) -> Mmd2Estimate:
    """Unbiased squared-MMD estimate between the rows of X and the rows of Y.

    value = sum_{i != i'} k(x_i, x_i') / (N_X (N_X - 1))
          - 2 sum_{i,j} k(x_i, y_j) / (N_X N_Y)
          + sum_{j != j'} k(y_j, y_j') / (N_Y (N_Y - 1)).

    The two sets may differ in size. Internally the arguments are put in a
    canonical order before accumulating, so the result is exactly symmetric
    under swapping X and Y.
    """
    xa = np.atleast_2d(np.asarray(X, dtype=np.float64))
    ya = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if xa.ndim != 2 or ya.ndim != 2:
        raise DimensionMismatchError("point sets must be 2-D matrices")
    if xa.shape[1] != ya.shape[1]:
        raise DimensionMismatchError(
            f"point sets have different dimensions: {xa.shape[1]} vs {ya.shape[1]}"
        )
    if xa.shape[0] < 2 or ya.shape[0] < 2:
        raise InvalidDataError("both point sets need at least 2 points")
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise InvalidDataError("point sets contain non-finite entries")

    ls = _lengthscale_value(l)
    l2 = ls**2

    # Canonical argument order makes the floating-point accumulation, and
    # hence the returned value, exactly symmetric in (X, Y).
    a, b = xa, ya
    if (b.shape[0], b.tobytes()) < (a.shape[0], a.tobytes()):
        a, b = b, a

    n_a, n_b = a.shape[0], b.shape[0]
    term_a = _self_gram_sum(a, l2) / (n_a * (n_a - 1))
    term_b = _self_gram_sum(b, l2) / (n_b * (n_b - 1))
    cross = _gram_sums(a, b, l2) / (n_a * n_b)
    value = term_a - 2.0 * cross + term_b
    return Mmd2Estimate(
        value=float(value),
        n_x=xa.shape[0],
        n_y=ya.shape[0],
        lengthscale=Lengthscale(ls),
    )


def mmd2_gaussian_closed_form(mu1, sigma1, mu2, sigma2, l) -> float:
    """Exact squared MMD between N(mu1, sigma1^2) and N(mu2, sigma2^2).

    Integrating the squared-exponential kernel against the two Gaussians
    gives, with lengthscale l,

        l/sqrt(l^2 + 4 sigma1^2) + l/sqrt(l^2 + 4 sigma2^2)
        - 2 l/sqrt(l^2 + 2 sigma1^2 + 2 sigma2^2)
            * exp(-(mu1 - mu2)^2 / (l^2 + 2 sigma1^2 + 2 sigma2^2)).

    The result is nonnegative and vanishes iff the two distributions match.
    """
    if sigma1 < 0 or sigma2 < 0:
        raise InvalidDataError("standard deviations must be nonnegative")
    ls = _lengthscale_value(l)
    l2 = ls**2
    s1, s2 = float(sigma1) ** 2, float(sigma2) ** 2
    mix = l2 + 2.0 * s1 + 2.0 * s2
    value = (
        ls / np.sqrt(l2 + 4.0 * s1)
        + ls / np.sqrt(l2 + 4.0 * s2)
        - 2.0 * ls / np.sqrt(mix) * np.exp(-((float(mu1) - float(mu2)) ** 2) / mix)
    )
    return float(value)


def mmd2_between_datasets(
    ds_a: TransferFunctionDataset,
    ds_b: TransferFunctionDataset,
    i_moments: int,
    l=None,
) -> Mmd2Estimate:
    """Squared MMD between two transfer-function datasets.

    The kernel on raw transfer functions is defined as the squared-exponential
    kernel composed with the log-temporal-moment map, so the estimate is
    computed on the log-moment rows. When no lengthscale is given it is set
    by the median heuristic on the first dataset.
    """
    if ds_a.grid != ds_b.grid:
        raise GridMismatchError(
            f"datasets live on different grids: {ds_a.grid} vs {ds_b.grid}"
        )
    za = log_moment_matrix(ds_a, i_moments).rows
    zb = log_moment_matrix(ds_b, i_moments).rows
    if l is None:
        l = median_heuristic(za)
    return mmd2_unbiased(za, zb, l)
