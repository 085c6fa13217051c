"""Population Monte Carlo ABC driven by an MMD discrepancy.

The engine calibrates any simulator satisfying :class:`~mmdabc.models.base.
ModelInterface`. Each iteration draws ``m`` candidate parameter vectors
(from the prior on the first iteration, from a Gaussian-perturbed resample
of the previous population afterwards), simulates ``n_sim`` realizations per
candidate, and scores candidates by the unbiased squared-MMD estimate
between the candidate's log temporal moments and those of the observed
data. The ``m_eps`` best candidates are kept, locally corrected with
weighted linear regression of parameters on summary statistics, and
reweighted with the usual importance ratio against the previous population.

The kernel lengthscale is set once, by the median heuristic on the observed
log moments, and held fixed for the whole run so acceptance thresholds are
comparable across iterations. If the observed set is degenerate (identical
rows), the lengthscale instead comes from the pool of first-iteration
candidate moments.

Reproducibility contract: every random stream is derived from the run seed
through a (iteration, candidate) spawn key, so results are bit-identical
regardless of how many worker processes evaluate the candidates.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from .errors import (
    CalibrationRunError,
    ConfigError,
    DegenerateDataError,
    DegenerateWeightsError,
    DimensionMismatchError,
    InvalidDataError,
    MmdAbcError,
    StuckProposalError,
)
from .kernels import median_heuristic, mmd2_unbiased
from .signal import LogMomentMatrix, TransferFunctionDataset, log_moment_matrix

__all__ = [
    "AbcConfig",
    "PriorBox",
    "Population",
    "PopulationHistory",
    "MisspecificationCheck",
    "summarize",
    "sample_prior",
    "rejection_select",
    "detect_misspecification",
    "kde_mode",
    "regression_adjust",
    "pmc_propose",
    "pmc_weights",
    "run_pmc_abc",
    "posterior_mean",
    "posterior_std",
]

# Candidate seeds use spawn keys (iteration, 0..m-1); these two indices are
# reserved for the engine's own streams and must stay above any candidate
# index.
_PROPOSAL_STREAM = 1_000_000
_REFERENCE_STREAM = 1_000_001

# Fraction of the prior width used as a floor on proposal standard
# deviations, so a collapsed population can still move.
_SIGMA_FLOOR_FRACTION = 1e-9

# Boundary clamp for the logit reparameterization used by the regression
# adjustment.
_LOGIT_CLAMP = 1e-9


@dataclass(frozen=True)
class AbcConfig:
    """Run settings for the PMC-ABC engine.

    m: candidates per iteration; m_eps: accepted per iteration;
    t_iterations: number of PMC iterations; n_sim: simulated realizations
    per candidate; i_moments: number of log temporal moments; seed: master
    seed; regression: apply the post-acceptance linear adjustment.
    """

    m: int = 2000
    m_eps: int = 100
    t_iterations: int = 10
    n_sim: int = 100
    i_moments: int = 4
    seed: int = 1
    regression: bool = True

    def __post_init__(self):
        for name in ("m", "m_eps", "t_iterations", "n_sim", "i_moments", "seed"):
            val = getattr(self, name)
            if not float(val).is_integer():
                raise ConfigError(f"{name} must be an integer, got {val!r}")
            object.__setattr__(self, name, int(val))
        if not 2 <= self.m < _PROPOSAL_STREAM:
            raise ConfigError(f"m must be in [2, {_PROPOSAL_STREAM}), got {self.m}")
        if not 2 <= self.m_eps <= self.m:
            raise ConfigError(f"m_eps must be in [2, m], got {self.m_eps}")
        if self.t_iterations < 1:
            raise ConfigError(f"t_iterations must be at least 1, got {self.t_iterations}")
        if self.n_sim < 2:
            raise ConfigError(f"n_sim must be at least 2, got {self.n_sim}")
        if self.i_moments < 1:
            raise ConfigError(f"i_moments must be at least 1, got {self.i_moments}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")
        if not isinstance(self.regression, bool):
            raise ConfigError(f"regression must be a bool, got {self.regression!r}")


@dataclass(frozen=True)
class PriorBox:
    """Independent uniform prior over an axis-aligned box.

    ``integer_mask`` marks parameters that the simulator treats as integers;
    the engine itself keeps every coordinate real-valued and only the
    simulator rounds.
    """

    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    integer_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if len(names) < 1:
            raise ConfigError("prior needs at least one parameter")
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate parameter names in {names!r}")
        object.__setattr__(self, "names", names)
        lo = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        if lo.shape != (len(names),) or hi.shape != (len(names),):
            raise ConfigError("lower/upper bounds must match the parameter names")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ConfigError("prior bounds must be finite")
        if not (lo < hi).all():
            bad = names[int(np.argmax(~(lo < hi)))]
            raise ConfigError(f"prior bounds must satisfy lower < upper; check {bad!r}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        mask = self.integer_mask
        if mask is None:
            mask = np.zeros(len(names), dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool).reshape(-1)
            if mask.shape != (len(names),):
                raise ConfigError("integer_mask must match the parameter names")
        object.__setattr__(self, "integer_mask", mask)

    @classmethod
    def from_ranges(cls, ranges: dict, integer_names: Sequence[str] = ()) -> "PriorBox":
        """Build a box from a {name: (low, high)} mapping, preserving order."""
        names = tuple(ranges)
        lower = np.array([ranges[n][0] for n in names], dtype=np.float64)
        upper = np.array([ranges[n][1] for n in names], dtype=np.float64)
        unknown = set(integer_names) - set(names)
        if unknown:
            raise ConfigError(f"integer parameters {sorted(unknown)} not in the prior")
        mask = np.array([n in integer_names for n in names])
        return cls(names=names, lower=lower, upper=upper, integer_mask=mask)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 1:
            raise InvalidDataError("need at least one draw")
        return self.lower + rng.random((n, self.dim)) * self.width

    def contains(self, theta) -> np.ndarray:
        arr = np.asarray(theta, dtype=np.float64)
        if arr.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"parameter vectors have {arr.shape[-1]} coordinates, prior has {self.dim}"
            )
        return np.all((arr >= self.lower) & (arr <= self.upper), axis=-1)

    def pdf(self, theta) -> np.ndarray:
        density = 1.0 / float(np.prod(self.width))
        return np.where(self.contains(theta), density, 0.0)


class MisspecificationCheck(NamedTuple):
    flagged: bool
    outside: np.ndarray


@dataclass(frozen=True)
class Population:
    """One PMC iteration: accepted draws, their adjustment, and weights."""

    iteration: int
    theta_raw: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    mmd2: np.ndarray
    epsilon: float
    sigma_diag: Optional[np.ndarray]
    reference_theta: Optional[np.ndarray] = None
    reference_summary: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class PopulationHistory:
    """Full result of a calibration run."""

    populations: tuple
    param_names: tuple
    lengthscale: float
    misspecified: bool
    outside_mask: Optional[np.ndarray]
    runtime_s: float
    n_workers: int
    config: AbcConfig

    @property
    def final(self) -> Population:
        return self.populations[-1]


def summarize(z) -> np.ndarray:
    """Summary statistics of a log-moment matrix: means, then the upper
    triangle of the sample covariance (row-major), giving a vector of
    length I + I(I+1)/2."""
    rows = z.rows if isinstance(z, LogMomentMatrix) else np.asarray(z, dtype=np.float64)
    if rows.ndim != 2:
        raise InvalidDataError("summaries need a 2-D matrix of log moments")
    if rows.shape[0] < 2:
        raise InvalidDataError("summaries need at least 2 realizations")
    means = rows.mean(axis=0)
    cov = np.atleast_2d(np.cov(rows, rowvar=False, ddof=1))
    iu = np.triu_indices(rows.shape[1])
    return np.concatenate([means, cov[iu]])


def sample_prior(prior: PriorBox, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m parameter vectors from the prior box."""
    return prior.sample(rng, m)


def rejection_select(mmd2_values, m_eps: int) -> np.ndarray:
    """Indices of the m_eps smallest discrepancies, ascending; ties keep
    their original order so the selection is deterministic."""
    values = np.asarray(mmd2_values, dtype=np.float64)
    if values.ndim != 1:
        raise InvalidDataError("discrepancies must form a vector")
    if not np.isfinite(values).all():
        raise InvalidDataError("discrepancies contain non-finite values")
    if not 1 <= m_eps <= values.size:
        raise InvalidDataError(f"cannot accept {m_eps} of {values.size} candidates")
    return np.argsort(values, kind="stable")[:m_eps]


def detect_misspecification(s_obs, summaries) -> MisspecificationCheck:
    """Flag the run when any observed summary coordinate falls outside the
    range spanned by the first-iteration candidate summaries."""
    s = np.asarray(s_obs, dtype=np.float64)
    pool = np.asarray(summaries, dtype=np.float64)
    if pool.ndim != 2 or s.shape != (pool.shape[1],):
        raise DimensionMismatchError(
            f"summary pool {pool.shape} is incompatible with observed vector {s.shape}"
        )
    outside = (s < pool.min(axis=0)) | (s > pool.max(axis=0))
    return MisspecificationCheck(flagged=bool(outside.any()), outside=outside)


def kde_mode(samples) -> np.ndarray:
    """Mode of a product-Gaussian kernel density estimate, restricted to the
    sample points.

    Bandwidths follow Silverman's rule per dimension,
    h = 0.9 min(std, IQR/1.34) n^(-1/5). Dimensions with no spread carry no
    information about the mode and are skipped; if every dimension is
    degenerate the first sample is returned.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidDataError("kde_mode needs an (n, d) sample matrix")
    n = x.shape[0]
    if n == 1:
        return x[0].copy()
    log_density = np.zeros(n)
    informative = 0
    for j in range(x.shape[1]):
        col = x[:, j]
        std = float(col.std(ddof=1))
        q75, q25 = np.percentile(col, [75.0, 25.0])
        iqr = q75 - q25
        spread = min(std, iqr / 1.34) if iqr > 0 else std
        h = 0.9 * spread * n ** (-0.2)
        if not (np.isfinite(h) and h > 0):
            continue
        informative += 1
        z = (col[:, None] - col[None, :]) / h
        log_density += logsumexp(-0.5 * z**2, axis=1) - np.log(h)
    if informative == 0:
        return x[0].copy()
    return x[int(np.argmax(log_density))].copy()


def _to_logit(theta: np.ndarray, prior: PriorBox) -> np.ndarray:
    u = (theta - prior.lower) / prior.width
    u = np.clip(u, _LOGIT_CLAMP, 1.0 - _LOGIT_CLAMP)
    return np.log(u / (1.0 - u))


def _from_logit(x: np.ndarray, prior: PriorBox) -> np.ndarray:
    return prior.lower + expit(x) * prior.width


def regression_adjust(
    theta: np.ndarray,
    summaries: np.ndarray,
    s_obs: np.ndarray,
    distances: np.ndarray,
    prior: PriorBox,
) -> np.ndarray:
    """Local-linear correction of accepted parameters toward s_obs.

    Parameters are mapped to an unconstrained scale with a logit transform
    of their position inside the prior box (so adjusted values always land
    back inside the box), regressed on the summary residuals s - s_obs with
    Epanechnikov weights in the discrepancy, and shifted by the fitted
    slopes. Summary coordinates are standardized by 1.4826 * MAD before the
    fit; coordinates with zero MAD are dropped.
    """
    theta = np.asarray(theta, dtype=np.float64)
    summaries = np.asarray(summaries, dtype=np.float64)
    s_obs = np.asarray(s_obs, dtype=np.float64)
    distances = np.asarray(distances, dtype=np.float64)
    m = theta.shape[0]
    if summaries.shape != (m, s_obs.size) or distances.shape != (m,):
        raise DimensionMismatchError("regression inputs have inconsistent shapes")
    if theta.shape[1] != prior.dim:
        raise DimensionMismatchError("parameter matrix does not match the prior")

    # Epanechnikov kernel on the discrepancy, scaled so the worst accepted
    # candidate sits at the kernel edge. The unbiased estimator can go
    # slightly negative; anything at or below zero gets full weight.
    d_max = float(distances.max())
    if d_max <= 0:
        w = np.ones(m)
    else:
        w = np.where(distances <= 0, 1.0, 1.0 - (distances / d_max) ** 2)

    residuals = summaries - s_obs
    mad = np.median(np.abs(summaries - np.median(summaries, axis=0)), axis=0)
    scale = 1.4826 * mad
    keep = scale > 0
    if not keep.all():
        warnings.warn(
            f"dropping {int((~keep).sum())} summary coordinate(s) with zero spread "
            "from the regression adjustment",
            RuntimeWarning,
            stacklevel=2,
        )
    if not keep.any():
        return theta.copy()
    residuals = residuals[:, keep] / scale[keep]

    x = _to_logit(theta, prior)
    design = np.column_stack([np.ones(m), residuals])
    sw = np.sqrt(w)[:, None]
    solution, _, rank, _ = np.linalg.lstsq(design * sw, x * sw, rcond=None)
    if rank < design.shape[1]:
        warnings.warn(
            "regression design is rank deficient; skipping the adjustment",
            RuntimeWarning,
            stacklevel=2,
        )
        return theta.copy()
    beta = solution[1:, :]
    if not beta.any():
        return theta.copy()
    return _from_logit(x - residuals @ beta, prior)


def pmc_propose(
    rng: np.random.Generator,
    centers: np.ndarray,
    weights: np.ndarray,
    sigma_diag: np.ndarray,
    prior: PriorBox,
    m: int,
) -> np.ndarray:
    """Draw m candidates: resample centers by weight, perturb with an
    axis-aligned Gaussian, and redraw anything that lands outside the prior
    box. Raises once at least 10000 proposals have been tried with an
    in-box rate below 1e-4."""
    centers = np.asarray(centers, dtype=np.float64)
    std = np.sqrt(np.asarray(sigma_diag, dtype=np.float64))
    out = np.empty((m, prior.dim))
    alive = np.ones(m, dtype=bool)
    attempts = 0
    landed = 0
    while alive.any():
        k = int(alive.sum())
        idx = rng.choice(centers.shape[0], size=k, p=weights)
        candidate = centers[idx] + rng.standard_normal((k, prior.dim)) * std
        ok = prior.contains(candidate)
        attempts += k
        landed += int(ok.sum())
        pos = np.flatnonzero(alive)
        out[pos[ok]] = candidate[ok]
        alive[pos[ok]] = False
        if attempts >= 10_000 and landed / attempts < 1e-4:
            raise StuckProposalError(
                f"proposal acceptance rate {landed / attempts:.2e} after "
                f"{attempts} draws; the proposal has left the prior support"
            )
    return out


def pmc_weights(
    theta: np.ndarray,
    prior: PriorBox,
    centers: np.ndarray,
    weights_prev: np.ndarray,
    sigma_diag: np.ndarray,
) -> np.ndarray:
    """Importance weights of newly accepted draws against the mixture that
    proposed them: w_j proportional to p(theta_j) / sum_i w_i N(theta_j;
    center_i, diag(sigma_diag)). Weights are evaluated at the raw accepted
    draws and normalized to sum to one."""
    theta = np.asarray(theta, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    w_prev = np.asarray(weights_prev, dtype=np.float64)
    var = np.asarray(sigma_diag, dtype=np.float64)
    if (var <= 0).any():
        raise InvalidDataError("perturbation variances must be positive")

    numerator = prior.pdf(theta)
    diff = theta[:, None, :] - centers[None, :, :]
    quad = np.sum(diff**2 / var, axis=2)
    normalization = float(np.prod(np.sqrt(2.0 * np.pi * var)))
    kernel = np.exp(-0.5 * quad) / normalization
    denominator = np.maximum(kernel @ w_prev, np.finfo(np.float64).tiny)
    w = numerator / denominator
    total = float(w.sum())
    if not (np.isfinite(total) and total > 0):
        raise DegenerateWeightsError(
            "importance weights are all zero or non-finite; the proposal no "
            "longer overlaps the prior"
        )
    return w / total


def _weighted_variance(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Unbiased under reliability weights; matches ddof=1 for equal weights.
    mu = w @ x
    var = w @ (x - mu) ** 2
    denom = 1.0 - float(w @ w)
    if denom > 0:
        var = var / denom
    return var


def _proposal_sigma(population: Population, prior: PriorBox) -> np.ndarray:
    sigma = 2.0 * _weighted_variance(population.theta, population.weights)
    floor = (_SIGMA_FLOOR_FRACTION * prior.width) ** 2
    return np.maximum(sigma, floor)


def _candidate_log_moments(task) -> np.ndarray:
    """Simulate one candidate and return its log-moment rows.

    Module-level so process pools can pickle it; the candidate's stream is
    keyed by (iteration, index) and therefore independent of scheduling.
    """
    model, theta, n_sim, grid, i_moments, entropy, spawn_key = task
    seed = np.random.SeedSequence(entropy=entropy, spawn_key=spawn_key)
    dataset = model.simulate(theta, n_sim, grid, seed)
    return log_moment_matrix(dataset, i_moments).rows


def _map_candidates(model, thetas, config: AbcConfig, grid, t: int, workers: int):
    tasks = [
        (model, thetas[i], config.n_sim, grid, config.i_moments, config.seed, (t, i))
        for i in range(thetas.shape[0])
    ]
    if workers <= 1:
        return [_candidate_log_moments(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(tasks) // (workers * 8))
        return list(pool.map(_candidate_log_moments, tasks, chunksize=chunk))


def _engine_seed(seed: int, t: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(t, stream))


def run_pmc_abc(
    model,
    prior: PriorBox,
    observed: TransferFunctionDataset,
    config: AbcConfig,
    workers: int = 1,
    progress: Optional[Callable[[Population], None]] = None,
) -> PopulationHistory:
    """Calibrate ``model`` to ``observed`` and return the full population
    history.

    Any failure after the run starts is re-raised as a
    :class:`CalibrationRunError` carrying the populations completed so far
    and the exit code of the underlying cause. ``progress``, when given, is
    called with each finished population.
    """
    if len(prior.names) != len(tuple(model.param_names)):
        raise ConfigError(
            f"prior has {len(prior.names)} parameters, model expects "
            f"{len(tuple(model.param_names))}"
        )
    if workers < 1:
        raise ConfigError(f"workers must be at least 1, got {workers}")

    start = time.perf_counter()
    populations = []
    try:
        if observed.n_obs < 2:
            raise InvalidDataError("calibration needs at least 2 observed realizations")
        z_obs = log_moment_matrix(observed, config.i_moments).rows
        s_obs = summarize(z_obs)
        try:
            lengthscale = median_heuristic(z_obs)
        except DegenerateDataError:
            lengthscale = None  # fall back to first-iteration candidates

        misspecified = False
        outside_mask = None
        previous: Optional[Population] = None
        for t in range(1, config.t_iterations + 1):
            rng = np.random.default_rng(_engine_seed(config.seed, t, _PROPOSAL_STREAM))
            if previous is None:
                sigma_diag = None
                theta_all = prior.sample(rng, config.m)
            else:
                sigma_diag = _proposal_sigma(previous, prior)
                theta_all = pmc_propose(
                    rng, previous.theta, previous.weights, sigma_diag, prior, config.m
                )

            z_list = _map_candidates(model, theta_all, config, observed.grid, t, workers)
            if lengthscale is None:
                pooled = np.stack([z[0] for z in z_list])
                lengthscale = median_heuristic(pooled)
            mmd2_all = np.array(
                [mmd2_unbiased(z_obs, z, lengthscale).value for z in z_list]
            )
            summaries_all = np.stack([summarize(z) for z in z_list])

            if t == 1:
                check = detect_misspecification(s_obs, summaries_all)
                misspecified, outside_mask = check.flagged, check.outside

            accepted = rejection_select(mmd2_all, config.m_eps)
            theta_acc = theta_all[accepted]
            summaries_acc = summaries_all[accepted]
            mmd2_acc = mmd2_all[accepted]

            reference_theta = None
            reference_summary = None
            s_target = s_obs
            if misspecified:
                # The observed summaries are unreachable; adjust toward the
                # summaries of the best point mass the model can offer
                # instead. Candidate ranking above still uses the data.
                reference_theta = kde_mode(theta_acc)
                z_ref = log_moment_matrix(
                    model.simulate(
                        reference_theta,
                        config.n_sim,
                        observed.grid,
                        _engine_seed(config.seed, t, _REFERENCE_STREAM),
                    ),
                    config.i_moments,
                ).rows
                reference_summary = summarize(z_ref)
                s_target = reference_summary

            if config.regression:
                theta_adj = regression_adjust(
                    theta_acc, summaries_acc, s_target, mmd2_acc, prior
                )
            else:
                theta_adj = theta_acc.copy()

            if previous is None:
                weights = np.full(config.m_eps, 1.0 / config.m_eps)
            else:
                weights = pmc_weights(
                    theta_acc, prior, previous.theta, previous.weights, sigma_diag
                )

            population = Population(
                iteration=t,
                theta_raw=theta_acc,
                theta=theta_adj,
                weights=weights,
                mmd2=mmd2_acc,
                epsilon=float(mmd2_acc.max()),
                sigma_diag=sigma_diag,
                reference_theta=reference_theta,
                reference_summary=reference_summary,
            )
            populations.append(population)
            previous = population
            if progress is not None:
                progress(population)
    except MmdAbcError as exc:
        raise CalibrationRunError(
            f"iteration {len(populations) + 1}: {exc}",
            populations=populations,
            cause_exit_code=exc.exit_code,
        ) from exc
    except Exception as exc:  # pragma: no cover - defensive wrapper
        raise CalibrationRunError(
            f"iteration {len(populations) + 1}: {exc}", populations=populations
        ) from exc

    return PopulationHistory(
        populations=tuple(populations),
        param_names=tuple(prior.names),
        lengthscale=lengthscale.l,
        misspecified=misspecified,
        outside_mask=outside_mask,
        runtime_s=time.perf_counter() - start,
        n_workers=workers,
        config=config,
    )


def _final_population(obj) -> Population:
    if isinstance(obj, PopulationHistory):
        return obj.final
    if isinstance(obj, Population):
        return obj
    raise InvalidDataError(f"expected a population or history, got {type(obj).__name__}")


def posterior_mean(obj) -> np.ndarray:
    """Mean of the adjusted samples in the final (or given) population."""
    return _final_population(obj).theta.mean(axis=0)


def posterior_std(obj) -> np.ndarray:
    """Standard deviation (ddof=1) of the adjusted samples."""
    return _final_population(obj).theta.std(axis=0, ddof=1)
