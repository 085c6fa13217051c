"""Graph-based simulator: closed-form cases, replay oracle, and guards.

The replay oracle regenerates the documented random-draw sequence
(scatterers, visibilities, phases) and evaluates H(f) = D + R (I-B)^{-1} T
with plain per-frequency matrix inverses, independent of the batched
implementation.
"""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from mmdabc.errors import (
    DivergentGraphError,
    InvalidDataError,
    ResourceGuardError,
)
from mmdabc.models.base import as_seed_sequence
from mmdabc.models.geometry import SPEED_OF_LIGHT, RoomGeometry, default_room_geometry
from mmdabc.models.noise import add_noise
from mmdabc.models.propagation_graph import (
    PG_PARAM_NAMES,
    PG_PRIOR_RANGES,
    PropagationGraphModel,
    PropagationGraphParams,
    _bounce_magnitudes,
    _bounce_series,
    simulate_pg,
)
from mmdabc.signal import FrequencyGrid

GRID = FrequencyGrid(n_s=33, bandwidth_hz=4e9)
F_START = 58e9


def single_pair_geometry():
    return RoomGeometry(
        dimensions_m=(3.0, 4.0, 3.0),
        tx_positions_m=np.array([[0.75, 0.5, 1.5]]),
        rx_positions_m=np.array([[2.25, 3.5, 1.5]]),
    )


def replay_transfer_function(params, geometry, grid, seed, f_start_hz, include_direct):
    """Independent reimplementation following the documented draw order."""
    graph_seed, _ = as_seed_sequence(seed).spawn(2)
    rng = np.random.default_rng(graph_seed)
    dims = np.asarray(geometry.dimensions_m)
    tx, rx = geometry.tx_positions_m, geometry.rx_positions_m
    n = params.n_scat
    scat = rng.random((n, 3)) * dims

    tau_t = np.maximum(cdist(scat, tx) / SPEED_OF_LIGHT, 1e-13)
    tau_r = np.maximum(cdist(rx, scat) / SPEED_OF_LIGHT, 1e-13)
    tau_b = np.maximum(cdist(scat, scat) / SPEED_OF_LIGHT, 1e-13)

    vis_t = rng.random(tau_t.shape) < params.p_vis
    vis_r = rng.random(tau_r.shape) < params.p_vis
    vis_b = rng.random(tau_b.shape) < params.p_vis
    np.fill_diagonal(vis_b, False)
    phi_t = rng.uniform(0, 2 * np.pi, tau_t.shape)
    phi_r = rng.uniform(0, 2 * np.pi, tau_r.shape)
    phi_b = rng.uniform(0, 2 * np.pi, tau_b.shape)

    bmag = np.zeros((n, n))
    for j in range(n):
        odi = vis_b[:, j].sum()
        if odi:
            bmag[:, j] = vis_b[:, j] * params.g / np.sqrt(odi)

    out = np.empty((geometry.n_rx, geometry.n_tx, grid.n_s), dtype=complex)
    for k in range(grid.n_s):
        f = f_start_hz + k * grid.delta_f_hz
        t_mat = (
            vis_t * np.exp(1j * phi_t) / (4 * np.pi * f * tau_t)
            * np.exp(-2j * np.pi * f * tau_t)
        )
        r_mat = vis_r * np.exp(1j * phi_r) * np.exp(-2j * np.pi * f * tau_r)
        b_mat = bmag * np.exp(1j * phi_b) * np.exp(-2j * np.pi * f * tau_b)
        h = r_mat @ np.linalg.inv(np.eye(n) - b_mat) @ t_mat
        if include_direct:
            tau_d = np.maximum(cdist(rx, tx) / SPEED_OF_LIGHT, 1e-13)
            h = h + np.exp(-2j * np.pi * f * tau_d) / (4 * np.pi * f * tau_d)
        out[:, :, k] = h
    return out.reshape(geometry.n_rx * geometry.n_tx, grid.n_s)


class TestGeometry:
    def test_default_room(self):
        geo = default_room_geometry()
        assert geo.dimensions_m == (3.0, 4.0, 3.0)
        assert geo.n_tx == 25 and geo.n_rx == 25
        spacing = SPEED_OF_LIGHT / 60e9 / 2
        tx = geo.tx_positions_m
        assert np.mean(tx, axis=0) == pytest.approx([0.75, 0.5, 1.5])
        assert np.min(cdist(tx, tx)[~np.eye(25, dtype=bool)]) == pytest.approx(spacing)

    def test_reduced_array(self):
        geo = default_room_geometry(n_side=2)
        assert geo.n_tx == 4 and geo.n_rx == 4

    def test_rejects_positions_outside_the_room(self):
        with pytest.raises(InvalidDataError):
            RoomGeometry(
                dimensions_m=(1.0, 1.0, 1.0),
                tx_positions_m=np.array([[0.5, 0.5, 1.5]]),
                rx_positions_m=np.array([[0.5, 0.5, 0.5]]),
            )

    def test_rejects_bad_dimensions(self):
        with pytest.raises(InvalidDataError):
            RoomGeometry(
                dimensions_m=(1.0, -1.0, 1.0),
                tx_positions_m=np.array([[0.0, 0.0, 0.0]]),
                rx_positions_m=np.array([[0.0, 0.0, 0.0]]),
            )


class TestParams:
    def test_from_vector_rounds_the_count(self):
        p = PropagationGraphParams.from_vector([0.5, 14.6, 0.5, 1e-9])
        assert p.n_scat == 15
        p = PropagationGraphParams.from_vector([0.5, 0.2, 0.5, 1e-9])
        assert p.n_scat == 1  # clipped from 0

    @pytest.mark.parametrize("g", [1.0, 1.5, -0.1])
    def test_rejects_gain_outside_unit_interval(self, g):
        with pytest.raises(InvalidDataError):
            PropagationGraphParams(g=g, n_scat=5, p_vis=0.5, sigma_w2=0.0)

    def test_rejects_fractional_count(self):
        with pytest.raises(InvalidDataError):
            PropagationGraphParams(g=0.5, n_scat=5.5, p_vis=0.5, sigma_w2=0.0)

    def test_prior_table(self):
        assert PG_PARAM_NAMES == ("g", "n_scat", "p_vis", "sigma_w2")
        assert PG_PRIOR_RANGES["n_scat"] == (5.0, 35.0)


class TestBounceMatrix:
    def test_column_power_sums_to_g_squared(self):
        # Edge (i, j) points from scatterer j to scatterer i. Vertex 0 feeds
        # both others (out-degree 2), vertex 1 feeds vertex 0, vertex 2 emits
        # nothing, so each active column re-radiates the power fraction g^2.
        vis = np.array(
            [[False, True, False], [True, False, False], [True, False, False]]
        )
        mag = _bounce_magnitudes(0.6, vis)
        assert np.allclose((mag**2).sum(axis=0), [0.36, 0.36, 0.0])
        assert mag[1, 0] == mag[2, 0] == pytest.approx(0.6 / np.sqrt(2))
        assert mag[0, 1] == pytest.approx(0.6)

    def test_gain_zero_clears_the_matrix(self):
        vis = np.ones((4, 4), dtype=bool)
        assert np.all(_bounce_magnitudes(0.0, vis) == 0.0)

    def test_singular_series_is_divergent(self):
        # A noiseless two-cycle with unit gain makes I - B exactly singular.
        b = np.array([[[0.0, 1.0], [1.0, 0.0]]], dtype=complex)
        t = np.ones((1, 2, 1), dtype=complex)
        with pytest.raises(DivergentGraphError, match="diverges"):
            _bounce_series(b, t, 1.0)

    def test_contractive_series_matches_the_neumann_sum(self):
        rng = np.random.default_rng(8)
        b = 0.2 * np.exp(2j * np.pi * rng.random((1, 3, 3)))
        t = rng.standard_normal((1, 3, 2)) + 0j
        total = np.zeros_like(t)
        term = t.copy()
        for _ in range(200):
            total += term
            term = b @ term
        assert np.allclose(_bounce_series(b, t, 0.2), total, rtol=1e-10)


class TestClosedFormCases:
    def test_direct_only_line_of_sight(self):
        # p_vis = 0 removes every scatterer edge; with the direct edge on,
        # H is the deterministic Friis response of the Tx-Rx distance.
        geo = single_pair_geometry()
        params = PropagationGraphParams(g=0.5, n_scat=3, p_vis=0.0, sigma_w2=0.0)
        ds = simulate_pg(params, geo, GRID, seed=5, f_start_hz=F_START, include_direct=True)
        tau_d = np.linalg.norm(geo.rx_positions_m[0] - geo.tx_positions_m[0]) / SPEED_OF_LIGHT
        f = F_START + np.arange(GRID.n_s) * GRID.delta_f_hz
        expected = np.exp(-2j * np.pi * f * tau_d) / (4 * np.pi * f * tau_d)
        assert np.allclose(ds.samples[0], expected, rtol=1e-12)

    def test_fully_blocked_channel_is_zero(self):
        geo = single_pair_geometry()
        params = PropagationGraphParams(g=0.5, n_scat=3, p_vis=0.0, sigma_w2=0.0)
        ds = simulate_pg(params, geo, GRID, seed=5, f_start_hz=F_START)
        assert np.all(ds.samples == 0.0)

    def test_single_bounce_amplitude_is_one_spreading_factor(self):
        # One scatterer, everything visible: the only path is
        # tx -> scatterer -> rx, and its magnitude must be the single
        # illumination spreading factor 1/(4 pi f tau_tx); the collection
        # edge contributes unit amplitude.
        geo = single_pair_geometry()
        params = PropagationGraphParams(g=0.9, n_scat=1, p_vis=1.0, sigma_w2=0.0)
        seed = 11
        ds = simulate_pg(params, geo, GRID, seed=seed, f_start_hz=F_START)

        graph_seed, _ = as_seed_sequence(seed).spawn(2)
        rng = np.random.default_rng(graph_seed)
        scat = rng.random((1, 3)) * np.asarray(geo.dimensions_m)
        tau_t = np.linalg.norm(scat[0] - geo.tx_positions_m[0]) / SPEED_OF_LIGHT
        f = F_START + np.arange(GRID.n_s) * GRID.delta_f_hz
        assert np.allclose(np.abs(ds.samples[0]), 1.0 / (4 * np.pi * f * tau_t), rtol=1e-12)

    def test_single_bounce_phase_slope_is_total_delay(self):
        geo = single_pair_geometry()
        params = PropagationGraphParams(g=0.9, n_scat=1, p_vis=1.0, sigma_w2=0.0)
        seed = 11
        ds = simulate_pg(params, geo, GRID, seed=seed, f_start_hz=F_START)

        graph_seed, _ = as_seed_sequence(seed).spawn(2)
        rng = np.random.default_rng(graph_seed)
        scat = rng.random((1, 3)) * np.asarray(geo.dimensions_m)
        tau_t = np.linalg.norm(scat[0] - geo.tx_positions_m[0]) / SPEED_OF_LIGHT
        tau_r = np.linalg.norm(geo.rx_positions_m[0] - scat[0]) / SPEED_OF_LIGHT
        # phase advance per frequency step: -2 pi df (tau_t + tau_r), wrapped
        # to the principal branch
        steps = np.angle(ds.samples[0, 1:] * np.conj(ds.samples[0, :-1]))
        predicted = np.angle(np.exp(-2j * np.pi * GRID.delta_f_hz * (tau_t + tau_r)))
        assert np.allclose(steps, predicted, rtol=0, atol=1e-9)


class TestReplayOracle:
    @pytest.mark.parametrize("include_direct", [False, True])
    def test_full_model_matches_replay(self, include_direct):
        geo = RoomGeometry(
            dimensions_m=(3.0, 4.0, 3.0),
            tx_positions_m=np.array([[0.7, 0.5, 1.4], [0.8, 0.5, 1.6]]),
            rx_positions_m=np.array([[2.2, 3.5, 1.4], [2.3, 3.5, 1.6]]),
        )
        params = PropagationGraphParams(g=0.7, n_scat=6, p_vis=0.8, sigma_w2=0.0)
        ds = simulate_pg(
            params, geo, GRID, seed=77, f_start_hz=F_START, include_direct=include_direct
        )
        oracle = replay_transfer_function(params, geo, GRID, 77, F_START, include_direct)
        assert np.allclose(ds.samples, oracle, rtol=1e-10, atol=1e-16)

    def test_noise_stream_is_separate(self):
        geo = single_pair_geometry()
        quiet = PropagationGraphParams(g=0.6, n_scat=4, p_vis=0.9, sigma_w2=0.0)
        noisy = PropagationGraphParams(g=0.6, n_scat=4, p_vis=0.9, sigma_w2=1e-9)
        seed = 13
        ds_quiet = simulate_pg(quiet, geo, GRID, seed=seed, f_start_hz=F_START)
        ds_noisy = simulate_pg(noisy, geo, GRID, seed=seed, f_start_hz=F_START)
        _, noise_seed = as_seed_sequence(seed).spawn(2)
        oracle = add_noise(ds_quiet.samples, 1e-9, noise_seed)
        assert np.array_equal(ds_noisy.samples, oracle)


class TestSimulateGuards:
    def test_scatterer_cap(self):
        geo = single_pair_geometry()
        params = PropagationGraphParams(g=0.5, n_scat=50, p_vis=0.5, sigma_w2=0.0)
        with pytest.raises(ResourceGuardError):
            simulate_pg(params, geo, GRID, seed=0, f_start_hz=F_START, max_scatterers=10)

    def test_rejects_nonpositive_start_frequency(self):
        geo = single_pair_geometry()
        params = PropagationGraphParams(g=0.5, n_scat=3, p_vis=0.5, sigma_w2=0.0)
        with pytest.raises(InvalidDataError):
            simulate_pg(params, geo, GRID, seed=0, f_start_hz=0.0)

    def test_deterministic(self):
        geo = default_room_geometry(n_side=2)
        params = PropagationGraphParams(g=0.6, n_scat=15, p_vis=0.5, sigma_w2=1e-9)
        a = simulate_pg(params, geo, GRID, seed=3, f_start_hz=F_START)
        b = simulate_pg(params, geo, GRID, seed=3, f_start_hz=F_START)
        c = simulate_pg(params, geo, GRID, seed=4, f_start_hz=F_START)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)


class TestModelWrapper:
    def test_rows_per_call_and_concatenation(self):
        geo = default_room_geometry(n_side=2)
        model = PropagationGraphModel(geometry=geo, f_start_hz=F_START)
        assert model.rows_per_call == 16
        theta = np.array([0.6, 15.0, 0.5, 0.0])

        ds = model.simulate(theta, 20, GRID, seed=21)
        assert ds.n_obs == 20

        root = as_seed_sequence(21)
        children = root.spawn(2)
        params = PropagationGraphParams.from_vector(theta)
        first = simulate_pg(params, geo, GRID, children[0], f_start_hz=F_START)
        second = simulate_pg(params, geo, GRID, children[1], f_start_hz=F_START)
        assert np.array_equal(ds.samples[:16], first.samples)
        assert np.array_equal(ds.samples[16:], second.samples[:4])

    def test_default_geometry_is_materialized(self):
        model = PropagationGraphModel()
        assert model.rows_per_call == 625
        assert model.param_names == PG_PARAM_NAMES

    def test_integer_count_rounds_at_the_simulator(self):
        geo = single_pair_geometry()
        model = PropagationGraphModel(geometry=geo, f_start_hz=F_START)
        a = model.simulate(np.array([0.5, 4.4, 0.8, 0.0]), 2, GRID, seed=6)
        b = model.simulate(np.array([0.5, 3.6, 0.8, 0.0]), 2, GRID, seed=6)
        assert np.array_equal(a.samples, b.samples)  # both round to 4
