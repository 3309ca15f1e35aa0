import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from netspline import (
    ContractError,
    FitConfig,
    NetworkPoint,
    bin_counts,
    bin_layout,
    build_basis,
    build_penalty,
    evaluate_density,
    evaluate_intensity,
    fellner_schall_step,
    fit_intensity,
    intensity_ratio,
    newton_fit,
    penalized_loglik,
)
from netspline.model import (
    _selected_inverse_trace,
    _trace_unpenalized,
    _weighted_gram,
    assemble_design,
    loglik_gradient_hessian,
    prepare,
    pseudo_inverse_trace,
)
from netspline.network import straight_network
from netspline.sim import IntensitySpec, sample_arrays

from netgen import random_network, random_points


def design_for(net, points, delta, h, order=1):
    basis = build_basis(net, delta)
    layout = bin_layout(net, h, basis)
    return assemble_design(layout, bin_counts(points, layout), basis, build_penalty(basis), order)


def unit_edge():
    return straight_network([(0, 0), (1, 0)], [(0, 1)])


class TestBins:
    def test_rounding_per_edge(self):
        net = straight_network([(0, 0), (1, 0), (1, 0.55)], [(0, 1), (1, 2)])
        layout = bin_layout(net, 0.5)
        assert layout.bins_per_edge.tolist() == [2, 1]
        assert layout.total_bins == 3

    def test_quarter_bins(self):
        layout = bin_layout(unit_edge(), 0.26)
        assert layout.bins_per_edge.tolist() == [4]
        assert layout.h_per_edge[0] == 0.25
        assert layout.midpoints.tolist() == [0.125, 0.375, 0.625, 0.875]

    def test_bin_wider_than_knots(self):
        net = unit_edge()
        with pytest.raises(ContractError):
            bin_layout(net, 0.3, build_basis(net, 0.25))

    def test_counts(self):
        layout = bin_layout(unit_edge(), 0.25)
        got = bin_counts([NetworkPoint(0, 0.3), NetworkPoint(0, 0.3), NetworkPoint(0, 0.75)], layout)
        assert got.counts.tolist() == [0, 2, 0, 1]
        assert got.n_total == 3

    def test_empty(self):
        got = bin_counts([], bin_layout(unit_edge(), 0.25))
        assert got.counts.tolist() == [0, 0, 0, 0] and got.n_total == 0

    def test_points_on_vertices_are_moved(self):
        net = straight_network([(0, 0), (1, 0), (2, 0)], [(0, 1), (1, 2)])
        layout = bin_layout(net, 0.5)
        with pytest.warns(UserWarning, match="vertices"):
            got = bin_counts([NetworkPoint(1, 0.0), NetworkPoint(1, 1.0)], layout)
        # the shared vertex goes to the end of edge 0, the far end stays on edge 1
        assert got.counts.tolist() == [0, 1, 0, 1]

    def test_refined_layout(self):
        layout = bin_layout(unit_edge(), 0.25).refined(4)
        assert layout.total_bins == 16
        assert np.isclose(layout.bin_width.sum(), 1.0)


class TestLikelihood:
    def test_zero_coefficients_no_data(self):
        design = design_for(unit_edge(), [], 0.5, 0.25)
        assert penalized_loglik(np.zeros(design.dimension), design, 3.0) == pytest.approx(-1.0)

    @given(st.integers(0, 5000), st.floats(-2, 2))
    @settings(max_examples=30, deadline=None)
    def test_constant_shift(self, seed, c):
        net = random_network(seed, 6)
        pts = random_points(net, 40, np.random.default_rng(seed))
        design = design_for(net, pts, 0.2, 0.05)
        gamma = np.random.default_rng(seed + 1).normal(size=design.dimension)
        lam = np.exp(design.B @ gamma + design.log_offset).sum()
        rho = 2.5
        change = penalized_loglik(gamma + c, design, rho) - penalized_loglik(gamma, design, rho)
        assert change == pytest.approx(design.n * c - (math.exp(c) - 1) * lam, rel=1e-9, abs=1e-9)

    @given(st.integers(0, 5000))
    @settings(max_examples=20, deadline=None)
    def test_curvature_matches_differenced_gradient(self, seed):
        rng = np.random.default_rng(seed)
        net = random_network(seed, 4)
        design = design_for(net, random_points(net, 30, rng), 0.3, 0.1)
        gamma = rng.normal(size=design.dimension) * 0.5
        rho = float(10 ** rng.uniform(-2, 2))
        _, H = loglik_gradient_hessian(gamma, design, rho)
        H = H.toarray()
        eps = 1e-6
        fd = np.empty_like(H)
        for j in range(design.dimension):
            e = np.zeros(design.dimension)
            e[j] = eps
            gp, _ = loglik_gradient_hessian(gamma + e, design, rho)
            gm, _ = loglik_gradient_hessian(gamma - e, design, rho)
            fd[:, j] = -(gp - gm) / (2 * eps)
        assert np.abs(fd - H).max() <= 1e-4 * np.abs(H).max()

    def test_curvature_positive_definite(self):
        net = random_network(5, 8)
        design = design_for(net, random_points(net, 10, np.random.default_rng(0)), 0.1, 0.05)
        _, H = loglik_gradient_hessian(np.zeros(design.dimension), design, 0.01)
        assert np.linalg.eigvalsh(H.toarray()).min() > 0


class TestNewton:
    def test_even_counts_give_constant_fit(self):
        net = unit_edge()
        layout = bin_layout(net, 0.05)
        pts = (np.zeros(40, dtype=int), np.repeat(layout.midpoints, 2))
        design = design_for(net, pts, 0.1, 0.05)
        res = newton_fit(design, 1.0, np.zeros(design.dimension))
        assert res.converged
        assert np.ptp(res.gamma) < 1e-8
        lam = np.exp(design.B @ res.gamma + design.log_offset)
        assert np.allclose(lam, 40 * layout.bin_width / net.total_length, rtol=1e-9)

    def test_local_maximum(self, standin):
        pts = sample_arrays(standin, IntensitySpec.uniform(), 100, 3)
        design = design_for(standin, pts, 0.05, 0.01)
        rho = 5.0
        res = newton_fit(design, rho, np.zeros(design.dimension))
        best = penalized_loglik(res.gamma, design, rho)
        grad, _ = loglik_gradient_hessian(res.gamma, design, rho)
        assert np.abs(grad).max() < 1e-8 * (1 + design.n)
        rng = np.random.default_rng(0)
        for _ in range(100):
            eps = rng.normal(size=design.dimension)
            eps *= 0.1 / np.linalg.norm(eps)
            assert penalized_loglik(res.gamma + eps, design, rho) <= best

    def test_rejects_negative_rho(self):
        design = design_for(unit_edge(), [NetworkPoint(0, 0.5)], 0.5, 0.25)
        with pytest.raises(ContractError):
            newton_fit(design, -1.0, np.zeros(design.dimension))

    def test_mass_identity(self):
        net = random_network(9)
        design = design_for(net, random_points(net, 57, np.random.default_rng(1)), 0.1, 0.02)
        res = newton_fit(design, 0.3, np.zeros(design.dimension))
        lam = np.exp(design.B @ res.gamma + design.log_offset)
        assert abs(lam.sum() - 57) <= 1e-8 * 57


class TestSmoothingUpdate:
    def test_pseudo_inverse_trace(self):
        assert pseudo_inverse_trace(2.0, 4) == 2.0

    def test_constant_coefficients_ask_for_more_smoothing(self):
        design = design_for(unit_edge(), [NetworkPoint(0, 0.5)], 0.25, 0.125)
        assert fellner_schall_step(np.zeros(design.dimension), 1.0, design) == math.inf

    @given(st.integers(0, 5000), st.floats(-2, 4))
    @settings(max_examples=25, deadline=None)
    def test_update_positive(self, seed, log_rho):
        net = random_network(seed, 8)
        design = design_for(net, random_points(net, 50, np.random.default_rng(seed)), 0.1, 0.05)
        rho = 10.0 ** log_rho
        gamma = newton_fit(design, rho, np.zeros(design.dimension)).gamma
        assert fellner_schall_step(gamma, rho, design) > 0

    @pytest.mark.parametrize("order", [1, 2])
    def test_stable_trace_equals_textbook_form(self, order):
        # rank - c tr(H^{-1} K) and the projected form agree where the
        # textbook form has no cancellation trouble
        net = random_network(4, 10)
        design = design_for(net, random_points(net, 80, np.random.default_rng(4)), 0.1, 0.05, order)
        gamma = newton_fit(design, 1.0, np.zeros(design.dimension)).gamma
        A = _weighted_gram(gamma, design)
        for c in (0.1, 1.0, 30.0):
            H = (A + c * design.K).toarray()
            textbook = design.rank - c * np.trace(np.linalg.solve(H, design.K.toarray()))
            stable = _trace_unpenalized(A, c * design.K, design.null, order=order, dense_threshold=5000)
            assert stable == pytest.approx(textbook, rel=1e-9)
            assert stable > 0

    @given(st.integers(0, 5000), st.sampled_from([1.0, 1e3, 1e8]))
    @settings(max_examples=15, deadline=None)
    def test_sparse_trace_route_matches_dense(self, seed, c):
        net = random_network(seed, 15)
        design = design_for(net, random_points(net, 60, np.random.default_rng(seed)), 0.05, 0.01)
        gamma = newton_fit(design, 1.0, np.zeros(design.dimension)).gamma
        A = _weighted_gram(gamma, design)
        dense = _trace_unpenalized(A, c * design.K, design.null, order=1, dense_threshold=10 ** 6)
        sparse_ = _trace_unpenalized(A, c * design.K, design.null, order=1, dense_threshold=0)
        assert sparse_ == pytest.approx(dense, rel=1e-8)

    def test_sparse_route_with_two_components(self):
        net = straight_network([(0, 0), (1, 0), (1, 1), (5, 5), (6, 5)], [(0, 1), (1, 2), (3, 4)])
        pts = random_points(net, 50, np.random.default_rng(2))
        design = design_for(net, pts, 0.1, 0.02)
        assert design.null.shape[1] == 2
        gamma = newton_fit(design, 1.0, np.zeros(design.dimension)).gamma
        A = _weighted_gram(gamma, design)
        dense = _trace_unpenalized(A, 7.0 * design.K, design.null, order=1, dense_threshold=10 ** 6)
        sparse_ = _trace_unpenalized(A, 7.0 * design.K, design.null, order=1, dense_threshold=0)
        assert sparse_ == pytest.approx(dense, rel=1e-10)

    @given(st.integers(0, 5000))
    @settings(max_examples=20, deadline=None)
    def test_selected_inverse_trace(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 60))
        band = sparse.random(n, n, density=0.1, random_state=seed)
        C = (band @ band.T + sparse.identity(n) * rng.uniform(0.1, 2)).tocsc()
        M = sparse.csr_matrix(C.multiply(rng.normal(size=(n, n))))
        M = (M + M.T) / 2
        expected = np.trace(np.linalg.solve(C.toarray(), M.toarray()))
        assert _selected_inverse_trace(C, M) == pytest.approx(expected, rel=1e-9, abs=1e-12)


class TestFit:
    def test_no_data(self, standin):
        with pytest.raises(ContractError, match="no data"):
            fit_intensity(standin, [], delta=0.05, h=0.01)

    @pytest.mark.parametrize("kwargs", [
        dict(delta=0.05, h=0.1), dict(delta=0.0, h=0.0), dict(delta=0.1, h=0.05, order=3),
        dict(delta=0.1, h=0.05, rho0=2e10), dict(delta=0.1, h=0.05, max_outer=0),
    ])
    def test_config_validation(self, kwargs):
        with pytest.raises(ContractError):
            FitConfig(**kwargs)

    def test_setup_for_other_network(self, standin):
        config = FitConfig(delta=0.1, h=0.05)
        with pytest.raises(ContractError):
            fit_intensity(unit_edge(), [NetworkPoint(0, 0.5)], config, setup=prepare(standin, config))

    def test_config_and_keywords_exclusive(self, standin):
        with pytest.raises(TypeError):
            fit_intensity(standin, [NetworkPoint(0, 0.5)], FitConfig(delta=0.1, h=0.05), h=0.01)

    def test_result_fields(self, standin):
        pts = sample_arrays(standin, IntensitySpec.named("sqrt_y_exp_neg_xy"), 200, 7)
        fit = fit_intensity(standin, pts, delta=0.05, h=0.01)
        assert fit.converged and not fit.rho_capped
        assert fit.rho > 0
        assert fit.n == 200
        assert abs(fit.fitted_mass - 200) <= 1e-8 * 200
        assert 1.0 <= fit.edf <= fit.basis.dimension
        assert fit.rho_path[0] == 1.0 and len(fit.rho_path) == fit.outer_iterations
        assert fit.newton_iterations >= fit.outer_iterations

    def test_second_order(self, standin):
        pts = sample_arrays(standin, IntensitySpec.named("sqrt_y_exp_neg_xy"), 200, 8)
        fit = fit_intensity(standin, pts, delta=0.05, h=0.01, order=2)
        assert fit.converged and fit.penalty_order == 2
        assert abs(fit.fitted_mass - 200) <= 1e-8 * 200

    def test_deterministic(self, standin):
        pts = sample_arrays(standin, IntensitySpec.uniform(), 100, 11)
        a = fit_intensity(standin, pts, delta=0.05, h=0.01)
        b = fit_intensity(standin, pts, delta=0.05, h=0.01)
        assert a.gamma.tobytes() == b.gamma.tobytes()
        assert (a.rho, a.edf, a.rho_path) == (b.rho, b.edf, b.rho_path)

    def test_fit_at_cap_is_flat(self, standin):
        pts = sample_arrays(standin, IntensitySpec.named("sqrt_y_exp_neg_xy"), 100, 2)
        design = design_for(standin, pts, 0.05, 0.01)
        res = newton_fit(design, 1e10, np.zeros(design.dimension))
        lam = np.exp(design.B @ res.gamma)
        target = 100 / standin.total_length
        assert np.abs(lam / target - 1).max() < 0.01

    def test_integral_matches_count(self, standin):
        pts = sample_arrays(standin, IntensitySpec.uniform(), 100, 5)
        fit = fit_intensity(standin, pts, delta=0.05, h=0.01)
        bins = fit.bins
        assert np.sum(fit.intensity((bins.bin_edge, bins.midpoints)) * bins.bin_width) == pytest.approx(100, rel=5e-3)
        density = fit.density((bins.bin_edge, bins.midpoints))
        assert np.sum(density * bins.bin_width) == pytest.approx(1.0, rel=5e-3)

    def test_continuous_at_vertices(self, standin):
        pts = sample_arrays(standin, IntensitySpec.named("sqrt_y_exp_neg_xy"), 300, 1)
        fit = fit_intensity(standin, pts, delta=0.05, h=0.01)
        for inc in standin.incidence:
            at_vertex = []
            gaps = {1e-6: [], 1e-9: []}
            for m, side in inc:
                d = standin.lengths[m]
                end = 0.0 if side == 0 else d
                here = evaluate_intensity(fit, NetworkPoint(m, end))
                at_vertex.append(here)
                for eps in gaps:
                    t = eps if side == 0 else d - eps
                    gaps[eps].append(abs(evaluate_intensity(fit, NetworkPoint(m, t)) - here))
            # one value at the vertex from every side, and the approach is linear
            assert np.ptp(at_vertex) <= 1e-12 * max(at_vertex)
            assert max(gaps[1e-9]) <= 2e-3 * max(gaps[1e-6]) + 1e-12 * max(at_vertex)

    def test_evaluation(self, standin):
        pts = sample_arrays(standin, IntensitySpec.uniform(), 100, 4)
        fit = fit_intensity(standin, pts, delta=0.05, h=0.01)
        flat = dataclasses.replace(fit, gamma=np.zeros_like(fit.gamma))
        z = NetworkPoint(3, 0.1)
        assert evaluate_intensity(flat, z) == 1.0
        assert evaluate_density(fit, z, 200) == pytest.approx(evaluate_density(fit, z, 100) / 2)
        with pytest.raises(ContractError):
            evaluate_density(fit, z, 0)


@pytest.fixture(scope="module")
def fits(standin):
    spec = IntensitySpec.named("sqrt_y_exp_neg_xy")
    a = fit_intensity(standin, sample_arrays(standin, spec, 400, 1), delta=0.05, h=0.01)
    b = fit_intensity(standin, sample_arrays(standin, IntensitySpec.uniform(), 400, 2), delta=0.05, h=0.01)
    return a, b


class TestRatio:
    def test_identical_fits(self, fits):
        a, _ = fits
        r = intensity_ratio(a, a, 1e-6)
        grid = (a.bins.bin_edge, a.bins.midpoints)
        assert np.allclose(r(grid), 1.0, rtol=0, atol=1e-14)
        assert r.support_length() == pytest.approx(a.network.total_length)

    def test_floor_above_everything(self, fits):
        a, b = fits
        r = intensity_ratio(a, b, 1e9)
        grid = (a.bins.bin_edge, a.bins.midpoints)
        assert np.all(np.isnan(r(grid)))
        assert not r.defined(grid).any()
        assert r.support_length() == 0.0

    def test_floor_cuts_low_region(self, fits):
        a, _ = fits
        grid = (a.bins.bin_edge, a.bins.midpoints)
        floor = float(np.median(a.intensity(grid)))
        r = intensity_ratio(a, a, floor)
        assert 0 < r.support_length() < a.network.total_length

    def test_doubling_numerator(self, standin):
        pts = sample_arrays(standin, IntensitySpec.uniform(), 2000, 9)
        twice = (np.concatenate([pts[0], pts[0]]), np.concatenate([pts[1], pts[1]]))
        base = fit_intensity(standin, pts, delta=0.05, h=0.01)
        doubled = fit_intensity(standin, twice, delta=0.05, h=0.01)
        grid = (base.bins.bin_edge, base.bins.midpoints)
        ratio = intensity_ratio(doubled, base, 1e-3)(grid)
        assert np.abs(ratio / 2 - 1).max() < 0.01

    def test_errors(self, fits):
        a, _ = fits
        with pytest.raises(ContractError):
            intensity_ratio(a, a, 0.0)
        other = fit_intensity(unit_edge(), [NetworkPoint(0, 0.3), NetworkPoint(0, 0.6)], delta=0.25, h=0.25)
        with pytest.raises(ContractError):
            intensity_ratio(a, other, 1.0)


def test_no_warnings_on_clean_data(standin):
    pts = sample_arrays(standin, IntensitySpec.uniform(), 50, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit_intensity(standin, pts, delta=0.05, h=0.01)
