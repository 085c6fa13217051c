"""Likelihood-free calibration of stochastic channel simulators.

The package fits simulator parameters to transfer-function measurements by
approximate Bayesian computation, using the maximum mean discrepancy
between log temporal moments as the data distance. It ships two reference
simulators (a clustered multipath model and a propagation-graph model), the
PMC-ABC engine, and a small CLI (``mmdabc``).
"""

from .engine import (
    AbcConfig,
    Population,
    PopulationHistory,
    PriorBox,
    detect_misspecification,
    kde_mode,
    pmc_propose,
    pmc_weights,
    posterior_mean,
    posterior_std,
    regression_adjust,
    rejection_select,
    run_pmc_abc,
    sample_prior,
    summarize,
)
from .errors import (
    CalibrationRunError,
    ConfigError,
    DegenerateDataError,
    DegenerateSignalError,
    DegenerateWeightsError,
    DimensionMismatchError,
    DivergentGraphError,
    GridMismatchError,
    InvalidDataError,
    MmdAbcError,
    NumericalDomainError,
    NumericalError,
    ResourceGuardError,
    StuckProposalError,
    ValidationError,
)
from .kernels import (
    Lengthscale,
    Mmd2Estimate,
    median_heuristic,
    mmd2_between_datasets,
    mmd2_gaussian_closed_form,
    mmd2_unbiased,
    se_kernel,
)
from .models import (
    ModelInterface,
    PropagationGraphModel,
    PropagationGraphParams,
    RoomGeometry,
    SalehValenzuelaModel,
    SalehValenzuelaParams,
    default_room_geometry,
    simulate_pg,
    simulate_sv,
)
from .signal import (
    FrequencyGrid,
    LogMomentMatrix,
    TimeDomainSignal,
    TransferFunctionDataset,
    ValidationStats,
    apdp,
    log_moment_matrix,
    snr_db,
    standardized_moments,
    temporal_moments,
    to_time_domain,
)

__version__ = "0.1.0"

__all__ = [
    "AbcConfig",
    "PriorBox",
    "Population",
    "PopulationHistory",
    "run_pmc_abc",
    "sample_prior",
    "summarize",
    "rejection_select",
    "regression_adjust",
    "pmc_propose",
    "pmc_weights",
    "detect_misspecification",
    "kde_mode",
    "posterior_mean",
    "posterior_std",
    "Lengthscale",
    "Mmd2Estimate",
    "se_kernel",
    "median_heuristic",
    "mmd2_unbiased",
    "mmd2_gaussian_closed_form",
    "mmd2_between_datasets",
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
    "ModelInterface",
    "SalehValenzuelaModel",
    "SalehValenzuelaParams",
    "simulate_sv",
    "PropagationGraphModel",
    "PropagationGraphParams",
    "simulate_pg",
    "RoomGeometry",
    "default_room_geometry",
    "MmdAbcError",
    "ValidationError",
    "InvalidDataError",
    "DimensionMismatchError",
    "GridMismatchError",
    "ConfigError",
    "NumericalError",
    "DegenerateSignalError",
    "DegenerateDataError",
    "NumericalDomainError",
    "ResourceGuardError",
    "DivergentGraphError",
    "StuckProposalError",
    "DegenerateWeightsError",
    "CalibrationRunError",
    "__version__",
]
