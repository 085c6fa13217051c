"""File formats and run artifacts.

Datasets are plain delimited text: one realization per row, real and
imaginary parts interleaved, printed with 17 significant digits so a
write/read round trip is bit exact. A structured-text sidecar
(``<payload>.meta.json``) records the shape and the frequency grid,
including the absolute start frequency. Run configuration is a single JSON
document; calibration results land in a directory as per-iteration CSV
posteriors plus JSON diagnostics, an estimate file, and an echo of the
resolved configuration (with the seed) sufficient to re-run identically.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp

from .engine import AbcConfig, Population, PopulationHistory, PriorBox
from .errors import ConfigError, InvalidDataError
from .models import (
    PG_INTEGER_PARAMS,
    PG_PRIOR_RANGES,
    SV_PRIOR_RANGES,
    PropagationGraphModel,
    RoomGeometry,
    SalehValenzuelaModel,
    default_room_geometry,
)
from .signal import (
    FrequencyGrid,
    TransferFunctionDataset,
    apdp,
    log_moment_matrix,
    standardized_moments,
    temporal_moments,
    to_time_domain,
)

__all__ = [
    "RunConfig",
    "write_dataset",
    "read_dataset",
    "read_dataset_meta",
    "load_geometry",
    "save_geometry",
    "load_config",
    "build_model",
    "build_prior",
    "write_run_artifacts",
    "write_populations",
    "write_diagnostics",
    "write_estimate",
    "write_config_echo",
    "read_posterior_mean",
    "write_validation_tables",
]

_MODEL_ALIASES = {
    "sv": "sv",
    "saleh_valenzuela": "sv",
    "saleh-valenzuela": "sv",
    "pg": "pg",
    "propagation_graph": "pg",
    "propagation-graph": "pg",
}

_CONFIG_KEYS = {
    "model",
    "prior",
    "m",
    "m_eps",
    "t_iterations",
    "n_sim",
    "i_moments",
    "seed",
    "regression",
    "grid",
    "f_start_hz",
    "include_direct",
    "geometry",
}

# Statistics reported by the validation tables, in output order.
_VALIDATION_STATS = ("p0", "mean_delay_s", "rms_delay_spread_s")


@dataclass(frozen=True)
class RunConfig:
    """Resolved calibration setup: which model, which prior, which grid."""

    model: str
    prior: PriorBox
    abc: AbcConfig
    grid: FrequencyGrid
    f_start_hz: float = 58e9
    include_direct: bool = False
    geometry: Optional[RoomGeometry] = None

    def __post_init__(self):
        if self.model not in ("sv", "pg"):
            raise ConfigError(f"model must be 'sv' or 'pg', got {self.model!r}")


# ---------------------------------------------------------------------------
# datasets


def _meta_path(path: str) -> str:
    return f"{path}.meta.json"


def write_dataset(path: str, dataset: TransferFunctionDataset, f_start_hz: float = 0.0) -> None:
    """Write a dataset payload and its sidecar.

    The payload holds ``2 n_s`` columns per row, (real, imag) interleaved at
    17 significant digits; the sidecar records n_obs, n_s, bandwidth_hz, and
    the absolute start frequency of the first sample.
    """
    flat = np.empty((dataset.n_obs, 2 * dataset.grid.n_s))
    flat[:, 0::2] = dataset.samples.real
    flat[:, 1::2] = dataset.samples.imag
    header = ",".join(f"re_{n},im_{n}" for n in range(dataset.grid.n_s))
    np.savetxt(path, flat, fmt="%.17g", delimiter=",", header=header, comments="")
    meta = {
        "n_obs": dataset.n_obs,
        "n_s": dataset.grid.n_s,
        "bandwidth_hz": dataset.grid.bandwidth_hz,
        "f_start_hz": float(f_start_hz),
    }
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def read_dataset_meta(path: str) -> dict:
    meta_path = _meta_path(path)
    if not os.path.exists(meta_path):
        raise InvalidDataError(f"dataset sidecar {meta_path!r} is missing")
    with open(meta_path) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidDataError(f"dataset sidecar {meta_path!r} is not valid JSON: {exc}")
    for key in ("n_obs", "n_s", "bandwidth_hz", "f_start_hz"):
        if key not in meta:
            raise InvalidDataError(f"dataset sidecar {meta_path!r} lacks {key!r}")
    return meta


def read_dataset(path: str) -> TransferFunctionDataset:
    """Read a dataset payload, checking it against its sidecar."""
    if not os.path.exists(path):
        raise InvalidDataError(f"dataset file {path!r} does not exist")
    meta = read_dataset_meta(path)
    try:
        flat = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise InvalidDataError(f"dataset payload {path!r} is malformed: {exc}")
    expected = (int(meta["n_obs"]), 2 * int(meta["n_s"]))
    if flat.shape != expected:
        raise InvalidDataError(
            f"dataset payload {path!r} has shape {flat.shape}, sidecar expects {expected}"
        )
    samples = flat[:, 0::2] + 1j * flat[:, 1::2]
    grid = FrequencyGrid(n_s=int(meta["n_s"]), bandwidth_hz=float(meta["bandwidth_hz"]))
    return TransferFunctionDataset(grid=grid, samples=samples)


# ---------------------------------------------------------------------------
# geometry and configuration


def save_geometry(path: str, geometry: RoomGeometry) -> None:
    doc = {
        "dimensions_m": list(geometry.dimensions_m),
        "tx_positions_m": geometry.tx_positions_m.tolist(),
        "rx_positions_m": geometry.rx_positions_m.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_geometry(spec) -> RoomGeometry:
    """Geometry from a JSON file path, an inline mapping, or an
    {"n_side": k[, "spacing_m": s]} shortcut for the default facing arrays."""
    if isinstance(spec, str):
        if not os.path.exists(spec):
            raise ConfigError(f"geometry file {spec!r} does not exist")
        with open(spec) as fh:
            spec = json.load(fh)
    if not isinstance(spec, dict):
        raise ConfigError(f"geometry must be a mapping or a file path, got {type(spec).__name__}")
    if "n_side" in spec:
        extras = set(spec) - {"n_side", "spacing_m"}
        if extras:
            raise ConfigError(f"unknown geometry keys {sorted(extras)}")
        return default_room_geometry(
            n_side=int(spec["n_side"]),
            spacing_m=spec.get("spacing_m"),
        )
    extras = set(spec) - {"dimensions_m", "tx_positions_m", "rx_positions_m"}
    if extras:
        raise ConfigError(f"unknown geometry keys {sorted(extras)}")
    try:
        return RoomGeometry(
            dimensions_m=tuple(spec["dimensions_m"]),
            tx_positions_m=np.asarray(spec["tx_positions_m"], dtype=np.float64),
            rx_positions_m=np.asarray(spec["rx_positions_m"], dtype=np.float64),
        )
    except KeyError as exc:
        raise ConfigError(f"geometry mapping lacks {exc.args[0]!r}")


def build_prior(model: str, prior_spec: Optional[dict] = None) -> PriorBox:
    """The model's default prior box, with optional per-parameter overrides."""
    if model == "sv":
        ranges = dict(SV_PRIOR_RANGES)
        integer_names = ()
    else:
        ranges = dict(PG_PRIOR_RANGES)
        integer_names = PG_INTEGER_PARAMS
    if prior_spec:
        unknown = set(prior_spec) - set(ranges)
        if unknown:
            raise ConfigError(f"unknown prior parameters {sorted(unknown)} for model {model!r}")
        for name, bounds in prior_spec.items():
            if not (isinstance(bounds, (list, tuple)) and len(bounds) == 2):
                raise ConfigError(f"prior for {name!r} must be a [low, high] pair")
            ranges[name] = (float(bounds[0]), float(bounds[1]))
    return PriorBox.from_ranges(ranges, integer_names=integer_names)


def load_config(source) -> RunConfig:
    """Parse a run configuration from a JSON file path or a mapping.

    Only ``model`` is required; everything else falls back to the defaults
    used throughout: an 801-point 4 GHz grid, the model's standard prior
    box, and the usual population sizes. Unknown keys are rejected.
    """
    if isinstance(source, str):
        if not os.path.exists(source):
            raise ConfigError(f"config file {source!r} does not exist")
        with open(source) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {source!r} is not valid JSON: {exc}")
    else:
        doc = dict(source)
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    if "model" not in doc:
        raise ConfigError("configuration must name a model ('sv' or 'pg')")
    alias = str(doc["model"]).lower()
    if alias not in _MODEL_ALIASES:
        raise ConfigError(f"unknown model {doc['model']!r}; use 'sv' or 'pg'")
    model = _MODEL_ALIASES[alias]

    grid_spec = doc.get("grid", {})
    extras = set(grid_spec) - {"n_s", "bandwidth_hz"}
    if extras:
        raise ConfigError(f"unknown grid keys {sorted(extras)}")
    grid = FrequencyGrid(
        n_s=int(grid_spec.get("n_s", 801)),
        bandwidth_hz=float(grid_spec.get("bandwidth_hz", 4e9)),
    )

    abc = AbcConfig(
        m=doc.get("m", 2000),
        m_eps=doc.get("m_eps", 100),
        t_iterations=doc.get("t_iterations", 10),
        n_sim=doc.get("n_sim", 100),
        i_moments=doc.get("i_moments", 4),
        seed=doc.get("seed", 1),
        regression=doc.get("regression", True),
    )
    prior = build_prior(model, doc.get("prior"))

    if model == "sv":
        for key in ("f_start_hz", "include_direct", "geometry"):
            if key in doc:
                raise ConfigError(f"{key!r} applies only to the graph model")
        return RunConfig(model=model, prior=prior, abc=abc, grid=grid)

    geometry = None
    if "geometry" in doc:
        geometry = load_geometry(doc["geometry"])
    return RunConfig(
        model=model,
        prior=prior,
        abc=abc,
        grid=grid,
        f_start_hz=float(doc.get("f_start_hz", 58e9)),
        include_direct=bool(doc.get("include_direct", False)),
        geometry=geometry,
    )


def build_model(cfg: RunConfig):
    if cfg.model == "sv":
        return SalehValenzuelaModel()
    return PropagationGraphModel(
        geometry=cfg.geometry,
        f_start_hz=cfg.f_start_hz,
        include_direct=cfg.include_direct,
    )


# ---------------------------------------------------------------------------
# calibration artifacts


def write_populations(out_dir: str, populations: Sequence[Population], names: Sequence[str]) -> None:
    """One CSV per iteration: adjusted samples, weight, and discrepancy."""
    for pop in populations:
        table = np.column_stack([pop.theta, pop.weights, pop.mmd2])
        header = ",".join(list(names) + ["weight", "mmd2"])
        np.savetxt(
            os.path.join(out_dir, f"posterior_t{pop.iteration}.csv"),
            table,
            fmt="%.17g",
            delimiter=",",
            header=header,
            comments="",
        )


def _population_diagnostics(pop: Population) -> dict:
    entry = {
        "iteration": pop.iteration,
        "epsilon": pop.epsilon,
        "mmd2_min": float(pop.mmd2.min()),
        "mmd2_median": float(np.median(pop.mmd2)),
        "mmd2_max": float(pop.mmd2.max()),
        "sigma_diag": None if pop.sigma_diag is None else pop.sigma_diag.tolist(),
    }
    if pop.reference_theta is not None:
        entry["reference_theta"] = pop.reference_theta.tolist()
    return entry


def write_diagnostics(
    out_dir: str,
    populations: Sequence[Population],
    names: Sequence[str],
    lengthscale: Optional[float] = None,
    misspecified: Optional[bool] = None,
    outside_mask=None,
    runtime_s: Optional[float] = None,
    n_workers: Optional[int] = None,
    error: Optional[str] = None,
) -> None:
    doc = {
        "param_names": list(names),
        "lengthscale": lengthscale,
        "misspecified": misspecified,
        "outside_summary_coordinates": (
            None if outside_mask is None else np.flatnonzero(outside_mask).tolist()
        ),
        "iterations": [_population_diagnostics(p) for p in populations],
        "runtime_s": runtime_s,
        "workers": n_workers,
    }
    if error is not None:
        doc["error"] = error
    with open(os.path.join(out_dir, "diagnostics.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_estimate(out_dir: str, population: Population, names: Sequence[str]) -> dict:
    """Posterior mean and standard deviation, plus 'mean (std)' strings."""
    mean = population.theta.mean(axis=0)
    std = population.theta.std(axis=0, ddof=1)
    doc = {
        "param_names": list(names),
        "mean": mean.tolist(),
        "std": std.tolist(),
        "formatted": {
            name: f"{m:.3g} ({s:.2g})" for name, m, s in zip(names, mean, std)
        },
    }
    with open(os.path.join(out_dir, "estimate.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return doc


def write_config_echo(out_dir: str, cfg: RunConfig, workers: int, data_path: str) -> None:
    doc = {
        "model": cfg.model,
        "data": os.path.abspath(data_path),
        "m": cfg.abc.m,
        "m_eps": cfg.abc.m_eps,
        "t_iterations": cfg.abc.t_iterations,
        "n_sim": cfg.abc.n_sim,
        "i_moments": cfg.abc.i_moments,
        "seed": cfg.abc.seed,
        "regression": cfg.abc.regression,
        "grid": {"n_s": cfg.grid.n_s, "bandwidth_hz": cfg.grid.bandwidth_hz},
        "prior": {
            name: [lo, hi]
            for name, lo, hi in zip(cfg.prior.names, cfg.prior.lower, cfg.prior.upper)
        },
        "workers": workers,
    }
    if cfg.model == "pg":
        doc["f_start_hz"] = cfg.f_start_hz
        doc["include_direct"] = cfg.include_direct
        geometry = cfg.geometry if cfg.geometry is not None else default_room_geometry()
        doc["geometry"] = {
            "dimensions_m": list(geometry.dimensions_m),
            "tx_positions_m": geometry.tx_positions_m.tolist(),
            "rx_positions_m": geometry.rx_positions_m.tolist(),
        }
    with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_run_artifacts(out_dir: str, history: PopulationHistory) -> None:
    """All artifacts of a completed run."""
    os.makedirs(out_dir, exist_ok=True)
    write_populations(out_dir, history.populations, history.param_names)
    write_diagnostics(
        out_dir,
        history.populations,
        history.param_names,
        lengthscale=history.lengthscale,
        misspecified=history.misspecified,
        outside_mask=history.outside_mask,
        runtime_s=history.runtime_s,
        n_workers=history.n_workers,
    )
    write_estimate(out_dir, history.final, history.param_names)


def read_posterior_mean(path: str, n_params: int) -> np.ndarray:
    """Posterior-mean parameters from an estimate.json or a posterior CSV."""
    if not os.path.exists(path):
        raise InvalidDataError(f"posterior file {path!r} does not exist")
    if path.endswith(".json"):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidDataError(f"posterior file {path!r} is not valid JSON: {exc}")
        if "mean" not in doc:
            raise InvalidDataError(f"posterior file {path!r} lacks a 'mean' entry")
        mean = np.asarray(doc["mean"], dtype=np.float64)
    else:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if table.shape[1] < n_params:
            raise InvalidDataError(
                f"posterior table {path!r} has {table.shape[1]} columns, "
                f"expected at least {n_params}"
            )
        mean = table[:, :n_params].mean(axis=0)
    if mean.shape != (n_params,):
        raise InvalidDataError(
            f"posterior mean from {path!r} has {mean.size} parameters, expected {n_params}"
        )
    return mean


# ---------------------------------------------------------------------------
# validation tables


def _realization_stats(dataset: TransferFunctionDataset) -> np.ndarray:
    rows = []
    for row in dataset.samples:
        m = temporal_moments(to_time_domain(row, dataset.grid), 3)
        s = standardized_moments(m)
        rows.append([s.p0, s.mean_delay_s, s.rms_delay_spread_s])
    return np.asarray(rows)


def _write_cdf(path: str, values: np.ndarray) -> None:
    order = np.sort(values)
    cdf = np.arange(1, order.size + 1) / order.size
    np.savetxt(
        path,
        np.column_stack([order, cdf]),
        fmt="%.17g",
        delimiter=",",
        header="value,cdf",
        comments="",
    )


def write_validation_tables(
    out_dir: str,
    data: TransferFunctionDataset,
    model_data: TransferFunctionDataset,
) -> dict:
    """Plot-ready comparison of a measured and a simulated dataset.

    Writes ``apdp.csv`` (delay, averaged power in dB for both sets) and one
    empirical CDF table per delay statistic and side, and returns the
    Kolmogorov-Smirnov distances, which also land in ``validation.json``.
    """
    if data.grid != model_data.grid:
        raise InvalidDataError("validation requires both datasets on the same grid")
    os.makedirs(out_dir, exist_ok=True)

    delay = data.grid.time_points()
    with np.errstate(divide="ignore"):
        data_db = 10.0 * np.log10(apdp(data))
        model_db = 10.0 * np.log10(apdp(model_data))
    np.savetxt(
        os.path.join(out_dir, "apdp.csv"),
        np.column_stack([delay, data_db, model_db]),
        fmt="%.17g",
        delimiter=",",
        header="delay_s,data_db,model_db",
        comments="",
    )

    stats_data = _realization_stats(data)
    stats_model = _realization_stats(model_data)
    ks = {}
    for j, stat in enumerate(_VALIDATION_STATS):
        _write_cdf(os.path.join(out_dir, f"cdf_{stat}_data.csv"), stats_data[:, j])
        _write_cdf(os.path.join(out_dir, f"cdf_{stat}_model.csv"), stats_model[:, j])
        result = ks_2samp(stats_data[:, j], stats_model[:, j])
        ks[stat] = {
            "ks_distance": float(result.statistic),
            "p_value": float(result.pvalue),
        }
    with open(os.path.join(out_dir, "validation.json"), "w") as fh:
        json.dump(ks, fh, indent=2)
        fh.write("\n")
    return ks
