"""Graph-based channel simulator.

Transmitters, receivers, and randomly placed scatterers are vertices of a
directed graph; edges exist independently with probability ``p_vis``. The
per-pair transfer function sums all bounce orders in closed form:

    H(f) = D(f) + R(f) (I - B(f))^{-1} T(f)

with D/T/R/B the edge-gain matrices of direct, transmitter-to-scatterer,
scatterer-to-receiver, and scatterer-to-scatterer edges. Every edge carries
the propagation phase exp(-j 2 pi f tau) of its delay tau = distance / c.
Edges leaving the transmitters additionally carry a 1/(4 pi f tau) spreading
amplitude; scatterer-to-receiver edges have unit amplitude; and every edge
leaving scatterer j toward another scatterer has amplitude g / sqrt(odi(j)),
odi being the out-degree, so one interaction re-radiates the fraction g^2 of
the power incident on the scatterers and the reverberant tail decays by g^2
per bounce. With the independent uniform random phases each scatterer edge
gets per call, the spectral radius of B concentrates near g; the rare draw
where I - B turns singular at a grid frequency is reported as a divergent
graph. One scatterer configuration is drawn per call and shared by all
transmit-receive pairs, which makes the rows of one call correlated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import DivergentGraphError, InvalidDataError, ResourceGuardError
from ..signal import FrequencyGrid, TransferFunctionDataset
from .base import as_seed_sequence
from .geometry import SPEED_OF_LIGHT, RoomGeometry, default_room_geometry
from .noise import add_noise

__all__ = [
    "PropagationGraphParams",
    "PropagationGraphModel",
    "simulate_pg",
    "PG_PARAM_NAMES",
    "PG_PRIOR_RANGES",
    "PG_INTEGER_PARAMS",
]

PG_PARAM_NAMES = ("g", "n_scat", "p_vis", "sigma_w2")

# Default uniform prior box for calibration runs, keyed by parameter name.
PG_PRIOR_RANGES = {
    "g": (0.0, 1.0),
    "n_scat": (5.0, 35.0),
    "p_vis": (0.0, 1.0),
    "sigma_w2": (2e-10, 2e-9),
}
PG_INTEGER_PARAMS = ("n_scat",)

# Delays shorter than this (~0.03 mm) are floored to keep the spreading
# amplitude finite if a random scatterer lands on top of an antenna.
_MIN_DELAY_S = 1e-13


@dataclass(frozen=True)
class PropagationGraphParams:
    """Parameters [g, n_scat, p_vis, sigma_w2].

    g is the per-bounce reflection gain in [0, 1), n_scat the number of
    scatterers, p_vis the probability that any directed edge exists, and
    sigma_w2 the measurement noise variance.
    """

    g: float
    n_scat: int
    p_vis: float
    sigma_w2: float

    def __post_init__(self):
        g = float(self.g)
        if not (np.isfinite(g) and 0.0 <= g < 1.0):
            raise InvalidDataError(f"g must lie in [0, 1), got {g!r}")
        object.__setattr__(self, "g", g)
        if not float(self.n_scat).is_integer() or self.n_scat < 1:
            raise InvalidDataError(f"n_scat must be a positive integer, got {self.n_scat!r}")
        object.__setattr__(self, "n_scat", int(self.n_scat))
        p = float(self.p_vis)
        if not (np.isfinite(p) and 0.0 <= p <= 1.0):
            raise InvalidDataError(f"p_vis must lie in [0, 1], got {p!r}")
        object.__setattr__(self, "p_vis", p)
        sw = float(self.sigma_w2)
        if not (np.isfinite(sw) and sw >= 0):
            raise InvalidDataError(f"sigma_w2 must be nonnegative and finite, got {sw!r}")
        object.__setattr__(self, "sigma_w2", sw)

    @classmethod
    def from_vector(cls, theta) -> "PropagationGraphParams":
        """Build params from a real vector, rounding n_scat to the nearest integer."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (4,):
            raise InvalidDataError(f"expected 4 parameters, got shape {theta.shape}")
        n_scat = max(1, int(round(theta[1])))
        return cls(g=theta[0], n_scat=n_scat, p_vis=theta[2], sigma_w2=theta[3])


def _bounce_magnitudes(g: float, vis_b: np.ndarray) -> np.ndarray:
    """Power-normalized scatterer-to-scatterer gain magnitudes.

    Entry (i, j) is the gain of the edge from scatterer j to scatterer i:
    g / sqrt(odi(j)) when visible, with odi(j) the out-degree of j. The
    squared magnitudes in each column then sum to g^2, so every interaction
    order carries g^2 times the power of the previous one.
    """
    odi = vis_b.sum(axis=0)
    mag = np.zeros_like(vis_b, dtype=np.float64)
    cols = odi > 0
    mag[:, cols] = vis_b[:, cols] * (g / np.sqrt(odi[cols]))[None, :]
    return mag


def _bounce_series(b_stack: np.ndarray, t_stack: np.ndarray, g: float) -> np.ndarray:
    """Sum of all interaction orders, (I - B(f))^{-1} T(f), frequency-stacked.

    The closed form exists whenever I - B is nonsingular; random edge phases
    keep the spectral radius of B near g, so a singular matrix at some grid
    frequency is an exceptional draw and is reported as a divergent graph.
    """
    n = b_stack.shape[-1]
    eye = np.eye(n, dtype=np.complex128)
    try:
        return np.linalg.solve(eye[None] - b_stack, t_stack)
    except np.linalg.LinAlgError as exc:
        raise DivergentGraphError(
            f"the bounce series diverges for g={g!r}: I - B is singular "
            "at a grid frequency"
        ) from exc


def _delay_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.maximum(cdist(a, b) / SPEED_OF_LIGHT, _MIN_DELAY_S)


def simulate_pg(
    params: PropagationGraphParams,
    geometry: RoomGeometry,
    grid: FrequencyGrid,
    seed,
    f_start_hz: float = 58e9,
    include_direct: bool = False,
    max_scatterers: int = 1000,
) -> TransferFunctionDataset:
    """One call of the graph model: all Tx-Rx pairs share one scatterer draw.

    Returns n_tx * n_rx rows ordered with the transmit index varying fastest
    (row = rx_index * n_tx + tx_index). Direct Tx-Rx edges are omitted by
    default (non-line-of-sight); ``include_direct=True`` adds them all.
    """
    if not (np.isfinite(f_start_hz) and f_start_hz > 0):
        raise InvalidDataError(f"f_start_hz must be positive, got {f_start_hz!r}")
    if params.n_scat > max_scatterers:
        raise ResourceGuardError(
            f"n_scat={params.n_scat} exceeds the cap {max_scatterers}; refusing to simulate"
        )
    root = as_seed_sequence(seed)
    graph_seed, noise_seed = root.spawn(2)
    rng = np.random.default_rng(graph_seed)

    dims = np.asarray(geometry.dimensions_m)
    tx = geometry.tx_positions_m
    rx = geometry.rx_positions_m
    n = params.n_scat
    scat = rng.random((n, 3)) * dims

    tau_t = _delay_matrix(scat, tx)  # (n, n_tx)
    tau_r = _delay_matrix(rx, scat)  # (n_rx, n)
    tau_b = _delay_matrix(scat, scat)  # (n, n)

    vis_t = rng.random(tau_t.shape) < params.p_vis
    vis_r = rng.random(tau_r.shape) < params.p_vis
    vis_b = rng.random(tau_b.shape) < params.p_vis
    np.fill_diagonal(vis_b, False)

    phi_t = rng.uniform(0.0, 2.0 * np.pi, tau_t.shape)
    phi_r = rng.uniform(0.0, 2.0 * np.pi, tau_r.shape)
    phi_b = rng.uniform(0.0, 2.0 * np.pi, tau_b.shape)

    bounce_mag = _bounce_magnitudes(params.g, vis_b)

    # Frequency-independent complex edge weights; spreading amplitudes carry
    # an extra 1/f applied inside the frequency stack.
    w_t = vis_t * np.exp(1j * phi_t) / (4.0 * np.pi * tau_t)
    w_r = vis_r * np.exp(1j * phi_r)
    w_b = bounce_mag * np.exp(1j * phi_b)

    f = f_start_hz + np.arange(grid.n_s) * grid.delta_f_hz
    fc = f[:, None, None]

    t_stack = (w_t[None] / fc) * np.exp(-2j * np.pi * fc * tau_t[None])
    b_stack = w_b[None] * np.exp(-2j * np.pi * fc * tau_b[None])
    r_stack = w_r[None] * np.exp(-2j * np.pi * fc * tau_r[None])

    h_pairs = r_stack @ _bounce_series(b_stack, t_stack, params.g)
    if not np.isfinite(h_pairs).all():
        raise DivergentGraphError(
            f"the bounce series overflowed for g={params.g!r}; "
            "I - B is near singular on the frequency grid"
        )

    if include_direct:
        tau_d = _delay_matrix(rx, tx)
        h_pairs = h_pairs + (1.0 / (4.0 * np.pi * tau_d[None] * fc)) * np.exp(
            -2j * np.pi * fc * tau_d[None]
        )

    rows = h_pairs.transpose(1, 2, 0).reshape(geometry.n_rx * geometry.n_tx, grid.n_s)
    samples = add_noise(rows, params.sigma_w2, noise_seed)
    return TransferFunctionDataset(grid=grid, samples=samples)


class PropagationGraphModel:
    """Simulator wrapper exposing the uniform model interface.

    A single call of the underlying graph produces n_tx * n_rx correlated
    rows; datasets larger than that concatenate independent calls.
    """

    param_names = PG_PARAM_NAMES

    def __init__(
        self,
        geometry: RoomGeometry | None = None,
        f_start_hz: float = 58e9,
        include_direct: bool = False,
        max_scatterers: int = 1000,
    ):
        self.geometry = geometry if geometry is not None else default_room_geometry()
        self.f_start_hz = float(f_start_hz)
        self.include_direct = include_direct
        self.max_scatterers = max_scatterers

    @property
    def rows_per_call(self) -> int:
        return self.geometry.n_tx * self.geometry.n_rx

    def simulate(self, theta, n_realizations, grid, seed) -> TransferFunctionDataset:
        if n_realizations < 1:
            raise InvalidDataError("n_realizations must be at least 1")
        params = PropagationGraphParams.from_vector(theta)
        calls = math.ceil(n_realizations / self.rows_per_call)
        root = as_seed_sequence(seed)
        blocks = [
            simulate_pg(
                params,
                self.geometry,
                grid,
                call_seed,
                f_start_hz=self.f_start_hz,
                include_direct=self.include_direct,
                max_scatterers=self.max_scatterers,
            ).samples
            for call_seed in root.spawn(calls)
        ]
        samples = np.vstack(blocks)[:n_realizations]
        return TransferFunctionDataset(grid=grid, samples=samples)
