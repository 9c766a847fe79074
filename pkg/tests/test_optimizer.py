import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdris.circuit import (
    AdmittanceModel,
    LineParams,
    assemble_admittance,
    build_model,
    scattering_from_admittance,
)
from bdris.errors import ContractError, OptimizationError
from bdris.geometry import ChannelSet, received_power
from bdris.kernels import available_backends
from bdris.optimizer import (
    InnerProblem,
    OptimizationResult,
    OptimizerConfig,
    admittance_from_auxiliary,
    central_difference,
    dominant_singular_value,
    effective_siso,
    lossless_inner_objective,
    lossy_inner_objective,
    optimize,
    params_to_admittance,
    quasi_newton_maximize,
    update_g_w,
)


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_channels(rng, n, n_t=1, n_r=1, direct=True):
    h_rt = cn(rng, n_r, n_t) * (0.3 if direct else 0.0)
    return ChannelSet(h_rt, cn(rng, n_r, n), cn(rng, n, n_t))


def positions(n, spacing=0.05):
    return np.c_[np.arange(n) * spacing, np.zeros(n), np.full(n, 2.0)]


def lossy_model(n, family="tridiagonal", alpha_db=0.5, spacing=0.05):
    return build_model("half_wave_lossy", family, positions(n, spacing), alpha_db_per_m=alpha_db)


def siso_bound(ch):
    return (abs(ch.h_rt[0, 0]) + np.linalg.norm(ch.h_r) * np.linalg.norm(ch.h_t)) ** 2


class TestEffectiveChannel:
    def test_canonical_vectors_select_rows_and_columns(self):
        rng = np.random.default_rng(0)
        ch = random_channels(rng, 3, n_t=2, n_r=4)
        h_rt, h_r, h_t = effective_siso(ch, np.eye(4)[2], np.eye(2)[1])
        assert h_rt == ch.h_rt[2, 1]
        assert np.array_equal(h_r, ch.h_r[2])
        assert np.array_equal(h_t, ch.h_t[:, 1])

    def test_random_products(self):
        rng = np.random.default_rng(1)
        ch = random_channels(rng, 5, n_t=3, n_r=2)
        g, w = cn(rng, 2), cn(rng, 3)
        g, w = g / np.linalg.norm(g), w / np.linalg.norm(w)
        h_rt, h_r, h_t = effective_siso(ch, g, w)
        theta = scattering_from_admittance(0.01j * np.diag(rng.standard_normal(5)))
        direct = g @ (ch.h_rt + ch.h_r @ theta @ ch.h_t) @ w
        assert h_rt + h_r @ theta @ h_t == pytest.approx(direct, rel=1e-12)


class TestObjectives:
    def test_identity_surface(self):
        rng = np.random.default_rng(2)
        eff = effective_siso(random_channels(rng, 4), [1.0], [1.0])
        expected = 2.0 * abs(eff[0] + eff[1] @ eff[2]) ** 2
        assert lossless_inner_objective(np.zeros((4, 4)), eff, 2.0) == pytest.approx(expected)

    def test_single_connected_phase_alignment(self):
        rng = np.random.default_rng(3)
        ch = random_channels(rng, 6, direct=False)
        eff = effective_siso(ch, [1.0], [1.0])
        phi = -np.angle(eff[1] * eff[2])
        b = np.diag(-np.tan(phi / 2) / 50.0)
        closed = np.sum(np.abs(eff[1]) * np.abs(eff[2])) ** 2
        assert lossless_inner_objective(b, eff, 1.0) == pytest.approx(closed, rel=1e-12)

    def test_matches_pipeline(self):
        rng = np.random.default_rng(4)
        ch = random_channels(rng, 4)
        b = rng.standard_normal((4, 4)) * 0.02
        b = b + b.T
        theta = scattering_from_admittance(1j * b)
        assert lossless_inner_objective(b, effective_siso(ch, [1.0], [1.0]), 3.0) == pytest.approx(
            received_power(ch, theta, [1.0], [1.0], 3.0), rel=1e-12)

    def test_asymmetric_rejected(self):
        eff = effective_siso(random_channels(np.random.default_rng(0), 2), [1.0], [1.0])
        with pytest.raises(ContractError):
            lossless_inner_objective(np.array([[0, 1], [0, 0.0]]), eff, 1.0)

    def test_zero_auxiliary_edge_is_open(self):
        model = lossy_model(3)
        a = np.diag([0.01, -0.02, 0.03])
        y = admittance_from_auxiliary(a, model)
        assert y[0, 1] == 0 and y[1, 2] == 0
        assert np.allclose(y, 1j * a)

    def test_infinite_radius_is_lossless(self):
        rng = np.random.default_rng(5)
        model = lossy_model(4, alpha_db=0.0)
        eff = effective_siso(random_channels(rng, 4), [1.0], [1.0])
        a = np.diag(rng.standard_normal(4)) * 0.02
        a[[0, 1, 2], [1, 2, 3]] = a[[1, 2, 3], [0, 1, 2]] = rng.standard_normal(3) * 0.02
        assert np.array_equal(admittance_from_auxiliary(a, model), 1j * a)
        assert lossy_inner_objective(a, eff, model, 1.0) == lossless_inner_objective(a, eff, 1.0)

    @pytest.mark.parametrize("k_parity", [0, 1])
    def test_saturation_limits(self, k_parity):
        spacing = 0.1 if k_parity == 0 else 0.05
        model = lossy_model(2, alpha_db=3.0, spacing=spacing)
        assert model.topology.half_wave_counts[0] % 2 == k_parity
        r = model.edge_radius()[0]
        for big in (1e9, -1e9):
            y = admittance_from_auxiliary(np.array([[0.0, big], [big, 0.0]]), model)
            assert y[0, 1].imag == pytest.approx(np.sign(big) * r, rel=1e-9)
            assert abs(y[0, 1].real) == pytest.approx(r, rel=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-1e6, 1e6), st.sampled_from([0.05, 0.1]))
    def test_semicircle(self, a_off, spacing):
        # every auxiliary value lands on the circle, in its low-loss half
        model = lossy_model(2, alpha_db=3.0, spacing=spacing)
        r = model.edge_radius()[0]
        center = -model.edge_sign()[0] * r
        y = admittance_from_auxiliary(np.array([[0.0, a_off], [a_off, 0.0]]), model)[0, 1]
        assert abs(abs(y - center) - r) <= 1e-9 * r
        assert abs(y.real) <= r * (1 + 1e-12)
        assert y.real * model.edge_sign()[0] <= 0


class TestGradient:
    @staticmethod
    def check(prob, rng, points):
        worst = 0.0
        for _ in range(points):
            x = rng.uniform(-2.0, 2.0, prob.size)
            _, g = prob.value_and_grad(x)
            fd = central_difference(prob.value, x, 1e-6)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
        return worst

    @pytest.mark.parametrize("family", ["tridiagonal", "fully"])
    def test_lossless(self, family):
        rng = np.random.default_rng(6)
        model = build_model("half_wave_lossless", family, positions(5))
        prob = InnerProblem(effective_siso(random_channels(rng, 5), [1.0], [1.0]), model, 1.0)
        assert self.check(prob, rng, 25) < 1e-5

    @pytest.mark.parametrize("family", ["tridiagonal", "fully"])
    def test_lossy(self, family):
        rng = np.random.default_rng(7)
        model = lossy_model(5, family, alpha_db=2.0)
        prob = InnerProblem(effective_siso(random_channels(rng, 5), [1.0], [1.0]), model, 1.0)
        assert self.check(prob, rng, 25) < 1e-5

    def test_objective_matches_plain_function(self):
        rng = np.random.default_rng(8)
        model = lossy_model(4, alpha_db=2.0)
        eff = effective_siso(random_channels(rng, 4), [1.0], [1.0])
        prob = InnerProblem(eff, model, 2.0)
        x = rng.uniform(-1, 1, prob.size)
        a = prob.auxiliary(x)
        assert prob.power(x) == pytest.approx(lossy_inner_objective(a, eff, model, 2.0), rel=1e-12)
        assert np.allclose(prob.admittance(x), params_to_admittance(x, model))

    @pytest.mark.skipif(len(available_backends()) < 2, reason="compiled backend not built")
    def test_backend_parity(self):
        rng = np.random.default_rng(9)
        model = lossy_model(8, alpha_db=1.0)
        eff = effective_siso(random_channels(rng, 8), [1.0], [1.0])
        x = rng.uniform(-1, 1, 15)
        f_py, g_py = InnerProblem(eff, model, 1.0, backend="python").value_and_grad(x)
        f_cy, g_cy = InnerProblem(eff, model, 1.0, backend="cython").value_and_grad(x)
        assert f_py == pytest.approx(f_cy, rel=1e-13)
        assert np.allclose(g_py, g_cy, rtol=1e-12, atol=1e-15)


class TestQuasiNewton:
    def test_concave_quadratic(self):
        c = np.array([1.5, -2.0, 0.25, 7.0])
        res = quasi_newton_maximize(lambda x: -np.sum((x - c) ** 2), np.zeros(4))
        assert np.allclose(res.x, c, atol=1e-8)
        assert res.converged

    def test_analytic_gradient_callable(self):
        c = np.array([3.0, -1.0])
        res = quasi_newton_maximize(lambda x: -np.sum((x - c) ** 2), np.zeros(2),
                                    grad=lambda x: -2 * (x - c))
        assert np.allclose(res.x, c, atol=1e-8)

    def test_never_worse_than_start(self):
        rng = np.random.default_rng(10)
        model = lossy_model(4, alpha_db=2.0)
        prob = InnerProblem(effective_siso(random_channels(rng, 4), [1.0], [1.0]), model, 1.0)
        x0 = rng.uniform(-1, 1, prob.size)
        res = quasi_newton_maximize(prob.value_and_grad, x0, grad=True)
        assert res.f >= prob.value(x0)

    def test_bad_start(self):
        with pytest.raises(OptimizationError):
            quasi_newton_maximize(lambda x: float("nan"), np.zeros(2))


class TestPrecoderCombiner:
    def test_rank_one(self):
        rng = np.random.default_rng(11)
        u, v = cn(rng, 3), cn(rng, 2)
        u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
        ch = ChannelSet(4.0 * np.outer(u, v.conj()), np.zeros((3, 2)), np.zeros((2, 2)))
        g, w = update_g_w(ch, np.eye(2))
        assert abs(g @ u.conj().conj()) == pytest.approx(1.0)
        assert abs(np.vdot(v, w)) == pytest.approx(1.0)
        assert received_power(ch, np.eye(2), g, w, 1.0) == pytest.approx(16.0)

    def test_matches_eigen_decomposition(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            ch = random_channels(rng, 4, n_t=4, n_r=4)
            theta = scattering_from_admittance(0.02j * np.diag(rng.standard_normal(4)))
            g, w = update_g_w(ch, theta)
            h = ch.h_rt + ch.h_r @ theta @ ch.h_t
            lam = np.linalg.eigvalsh(h.conj().T @ h).max()
            assert abs(g @ h @ w) ** 2 == pytest.approx(lam, rel=1e-10)
            assert dominant_singular_value(ch, theta) ** 2 == pytest.approx(lam, rel=1e-10)
            nz = np.flatnonzero(np.abs(w) > 0)[0]
            assert w[nz].imag == 0 and w[nz].real > 0

    def test_siso_is_trivial(self):
        ch = random_channels(np.random.default_rng(13), 3)
        g, w = update_g_w(ch, np.eye(3))
        assert abs(g[0]) == pytest.approx(1.0) and w[0] == pytest.approx(1.0)

    def test_zero_channel(self):
        ch = ChannelSet(np.zeros((1, 1)), np.zeros((1, 2)), np.zeros((2, 1)))
        with pytest.raises(OptimizationError):
            update_g_w(ch, np.eye(2))


class TestOptimize:
    @pytest.mark.parametrize("family", ["tridiagonal", "fully"])
    @pytest.mark.parametrize("n", [4, 16])
    def test_lossless_reaches_bound(self, family, n):
        rng = np.random.default_rng(14)
        model = build_model("half_wave_lossless", family, positions(n))
        for direct in (True, False):
            ch = random_channels(rng, n, direct=direct)
            res = optimize(ch, model, p_t=2.0)
            assert res.p_r_watts == pytest.approx(2.0 * siso_bound(ch), rel=1e-3)
            assert res.p_r_watts <= 2.0 * siso_bound(ch) * (1 + 1e-9)
            assert np.allclose(res.theta @ res.theta.conj().T, np.eye(n), atol=1e-10)

    def test_single_connected_closed_form(self):
        rng = np.random.default_rng(15)
        ch = random_channels(rng, 8, direct=False)
        res = optimize(ch, build_model("half_wave_lossless", "single", positions(8)))
        closed = np.sum(np.abs(ch.h_r[0]) * np.abs(ch.h_t[:, 0])) ** 2
        assert res.p_r_watts == pytest.approx(closed, rel=1e-4)
        assert np.allclose(np.abs(np.diag(res.theta)), 1.0)

    def test_result_invariants_mimo_lossy(self):
        rng = np.random.default_rng(16)
        ch = random_channels(rng, 6, n_t=2, n_r=3)
        model = lossy_model(6, alpha_db=1.0)
        res = optimize(ch, model, OptimizerConfig(restarts=2), p_t=5.0)
        again = received_power(ch, res.theta, res.g, res.w, 5.0)
        assert res.p_r_watts == pytest.approx(again, rel=1e-9)
        assert np.all(np.diff(res.trace) >= -1e-12 * np.abs(res.trace[:-1]))
        assert np.linalg.norm(res.g) == pytest.approx(1.0) and np.linalg.norm(res.w) == pytest.approx(1.0)
        assert np.max(np.abs(assemble_admittance(model, res.reactances) - res.y)) < 1e-9
        e0, e1 = model.topology.edges.T
        re = res.y[e0, e1].real
        assert np.all(np.abs(re) <= model.edge_radius() * (1 + 1e-12))
        assert np.all(re * model.edge_sign() <= 0)
        # nothing beats the best unitary surface
        assert res.p_r_watts <= 5.0 * (np.linalg.norm(ch.h_rt, 2) + np.linalg.norm(ch.h_r, 2)
                                       * np.linalg.norm(ch.h_t, 2)) ** 2

    def test_zero_attenuation_reproduces_lossless(self):
        rng = np.random.default_rng(17)
        ch = random_channels(rng, 5, direct=False)
        a = optimize(ch, build_model("half_wave_lossless", "tridiagonal", positions(5)))
        b = optimize(ch, lossy_model(5, alpha_db=0.0))
        assert a.p_r_watts == b.p_r_watts
        assert np.array_equal(a.y, b.y)

    def test_phase_invariance(self):
        rng = np.random.default_rng(18)
        ch = random_channels(rng, 6)
        m1 = build_model("lossless", "tridiagonal", positions(6, 0.05))
        m2 = build_model("lossless", "tridiagonal", positions(6, 0.063))
        r1, r2 = optimize(ch, m1), optimize(ch, m2)
        assert r1.p_r_watts == r2.p_r_watts
        assert np.array_equal(r1.y, r2.y)
        assert not np.allclose(r1.reactances.x_branch, r2.reactances.x_branch)
        assert np.max(np.abs(assemble_admittance(m2, r2.reactances) - r1.y)) < 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(19)
        ch = random_channels(rng, 5, n_t=2, n_r=2)
        model = lossy_model(5, alpha_db=1.0)
        cfg = OptimizerConfig(restarts=3, rng_seed=4)
        assert optimize(ch, model, cfg).to_json() == optimize(ch, model, cfg).to_json()

    def test_zero_init(self):
        rng = np.random.default_rng(20)
        ch = random_channels(rng, 4)
        res = optimize(ch, build_model("half_wave_lossless", "fully", positions(4)),
                       OptimizerConfig(init="zero"))
        assert res.p_r_watts > abs(ch.h_rt[0, 0] + ch.h_r @ ch.h_t) ** 2 * (1 - 1e-12)

    def test_json_round_trip(self):
        rng = np.random.default_rng(21)
        res = optimize(random_channels(rng, 3), lossy_model(3))
        back = OptimizationResult.from_dict(json.loads(res.to_json()))
        assert np.array_equal(back.theta, res.theta)
        assert np.array_equal(back.reactances.x_branch, res.reactances.x_branch)
        assert back.trace == res.trace
        assert back.p_r_watts == res.p_r_watts

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            optimize(random_channels(np.random.default_rng(0), 3), lossy_model(4))

    def test_general_model_rejected(self):
        model = build_model("general", "tridiagonal", positions(3))
        with pytest.raises(ContractError):
            optimize(random_channels(np.random.default_rng(0), 3), model)

    def test_config_validation(self):
        with pytest.raises(ContractError):
            OptimizerConfig(outer_tol=0.0)
        with pytest.raises(ContractError):
            OptimizerConfig(restarts=0)
        with pytest.raises(ContractError):
            OptimizerConfig(init="random")


def test_lossless_model_needs_no_attenuation():
    model = build_model("half_wave_lossless", "tridiagonal", positions(2))
    with pytest.raises(ContractError):
        AdmittanceModel("half_wave_lossless", LineParams(0.1, model.line.beta_rad_per_m), model.topology)
