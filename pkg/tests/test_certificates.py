"""Resolvent series, sampled bounds, Gronwall and threshold pipeline."""

import math

import numpy as np
import pytest

from exactpen import (
    InvalidArgumentError,
    Region,
    build_certificate,
    catalog_get,
    coercive_lower_bound,
    conjugate_exponent,
    descent_rate_bound,
    exactness_plateau_experiment,
    gronwall_sublevel_bound,
    growth_condition_fit,
    kernel_bound_estimate,
    lambda_star_bound,
    lipschitz_estimate,
    make_uniform_grid,
    resolvent_bound_check,
    resolvent_bound_omega,
)
from exactpen.catalog import catalog_entry
from exactpen.solver import SolverConfig

# Direct high-precision summation of sum_n (1/n!)^(1/2), frozen as the
# regression constant for omega(1, 1, 2).
OMEGA_1_1_2 = 3.4695063145210476


class TestConjugateExponent:
    def test_values(self):
        assert conjugate_exponent(2.0) == 2.0
        assert conjugate_exponent(1.0) == math.inf
        assert conjugate_exponent(math.inf) == 1.0
        assert conjugate_exponent(3.0) == pytest.approx(1.5)


class TestResolventOmega:
    def test_zero_kernel_bound(self):
        for tau in (0.5, 1.0, 10.0):
            assert resolvent_bound_omega(tau, 0.0, 2.0) == 1.0

    def test_zero_horizon(self):
        for xi in (0.5, 1.0, 10.0):
            assert resolvent_bound_omega(0.0, xi, 2.0) == 1.0

    def test_regression_value(self):
        assert resolvent_bound_omega(1.0, 1.0, 2.0) == pytest.approx(
            OMEGA_1_1_2, abs=1e-10
        )

    def test_monotone_and_finite(self):
        taus = [0.1, 0.5, 1.0, 2.0, 5.0]
        xis = [0.0, 0.5, 1.0, 2.0, 4.0]
        for p in (1.5, 2.0, 3.0):
            vals = [[resolvent_bound_omega(t, x, p) for x in xis] for t in taus]
            arr = np.array(vals)
            assert np.all(np.isfinite(arr))
            assert np.all(arr >= 1.0)
            assert np.all(np.diff(arr, axis=0) >= -1e-12)
            assert np.all(np.diff(arr, axis=1) >= -1e-12)

    def test_invalid_arguments(self):
        with pytest.raises(InvalidArgumentError):
            resolvent_bound_omega(-1.0, 1.0, 2.0)
        with pytest.raises(InvalidArgumentError):
            resolvent_bound_omega(1.0, 1.0, 1.0)


class TestResolventCheck:
    def test_zero_kernel(self):
        g = make_uniform_grid(1.0, 40)
        chk = resolvent_bound_check(np.zeros((40, 40)), g, 2.0)
        assert chk.norm_estimate == pytest.approx(1.0, rel=1e-12)
        assert chk.omega_bound == 1.0
        assert chk.holds

    def test_constant_kernel(self):
        g = make_uniform_grid(1.0, 60)
        chk = resolvent_bound_check(np.ones((60, 60)), g, 2.0)
        assert 1.0 <= chk.norm_estimate <= chk.omega_bound
        assert chk.omega_bound == pytest.approx(OMEGA_1_1_2, abs=1e-9)
        assert chk.holds

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_random_bounded_kernels(self, rng, p):
        g = make_uniform_grid(1.5, 50)
        for _ in range(20):
            y0 = np.abs(rng.standard_normal(50))
            y = y0[None, :] * rng.uniform(-1.0, 1.0, size=(50, 50))
            chk = resolvent_bound_check(y, g, p, y0=y0, seed=3)
            assert chk.holds, (chk.norm_estimate, chk.omega_bound)

    def test_majorant_violation_rejected(self, rng):
        g = make_uniform_grid(1.0, 10)
        with pytest.raises(InvalidArgumentError):
            resolvent_bound_check(np.ones((10, 10)), g, 2.0, y0=np.zeros(10))

    def test_singular_matrix_reported(self):
        g = make_uniform_grid(1.0, 10)
        y = np.zeros((10, 10))
        y[0, 0] = 1.0 / g.dt  # makes a zero pivot in I - K
        chk = resolvent_bound_check(y, g, 2.0)
        assert not chk.holds
        assert chk.singular or not math.isfinite(chk.norm_estimate)


class TestKernelBound:
    def test_control_only_dynamics(self):
        prob = catalog_get("lq-scalar")
        region = Region(x_low=[-1.0], x_high=[1.0], u_low=[-1.0], u_high=[1.0])
        kb = kernel_bound_estimate(prob, region, budget=512)
        assert kb.value == 0.0
        assert kb.provenance == "sampled"

    def test_constant_jacobian_exact(self, rng):
        from exactpen import ControlSetModel, ProblemSpec

        A = rng.standard_normal((2, 2))
        prob = ProblemSpec(
            dim_state=2,
            dim_control=1,
            horizon=2.0,
            x0=np.zeros(2),
            p=2.0,
            theta=lambda x, u, t: np.zeros(x.shape[0]),
            f=lambda x, u, t: x @ A.T,
            jac_f_x=lambda x, u, t: np.broadcast_to(A, (x.shape[0], 2, 2)),
            zeta=lambda x: 0.0,
            control_set=ControlSetModel.all_space(),
        )
        region = Region(x_low=-np.ones(2), x_high=np.ones(2),
                        u_low=[-1.0], u_high=[1.0])
        kb = kernel_bound_estimate(prob, region, budget=256)
        expected = 2.0 ** (1.0 / 2.0) * np.linalg.norm(A, 2)
        assert kb.value == pytest.approx(expected, rel=1e-12)

    def test_sine_dynamics_max_on_box(self):
        from exactpen import ControlSetModel, ProblemSpec

        prob = ProblemSpec(
            dim_state=1,
            dim_control=1,
            horizon=1.0,
            x0=np.zeros(1),
            p=2.0,
            theta=lambda x, u, t: np.zeros(x.shape[0]),
            f=lambda x, u, t: np.sin(x) + u,
            jac_f_x=lambda x, u, t: np.cos(x)[:, :, None],
            zeta=lambda x: 0.0,
            control_set=ControlSetModel.all_space(),
        )
        region = Region(x_low=[-2.0], x_high=[2.0], u_low=[-1.0], u_high=[1.0])
        kb = kernel_bound_estimate(prob, region, budget=4096)
        # odd lattice counts place a sample at x = 0, where |cos| peaks
        assert kb.value == pytest.approx(1.0, abs=1e-12)


class TestDescentRate:
    def test_zero_kernel(self):
        assert descent_rate_bound(0.0, 1.0, 2.0) == 0.5

    def test_unit_kernel(self):
        assert descent_rate_bound(1.0, 1.0, 2.0) == pytest.approx(
            1.0 / (2.0 * OMEGA_1_1_2), abs=1e-10
        )

    def test_monotone(self):
        Ms = [0.0, 0.5, 1.0, 2.0]
        a_vals = [descent_rate_bound(M, 1.0, 2.0) for M in Ms]
        assert all(b < a for a, b in zip(a_vals, a_vals[1:]))
        Ts = [0.5, 1.0, 2.0, 4.0]
        a_vals = [descent_rate_bound(1.0, T, 2.0) for T in Ts]
        assert all(b < a for a, b in zip(a_vals, a_vals[1:]))


class TestLipschitzEstimate:
    def test_zero_costs(self):
        prob = catalog_get("lq-scalar")
        prob.theta = lambda x, u, t: np.zeros(x.shape[0])
        prob.grad_theta_x = lambda x, u, t: np.zeros_like(x)
        prob.grad_theta_u = lambda x, u, t: np.zeros_like(u)
        region = Region(x_low=[-1.0], x_high=[1.0], u_low=[-1.0], u_high=[1.0])
        le = lipschitz_estimate(prob, region, budget=256)
        assert le.value == 0.0

    def test_quadratic_control_cost(self):
        prob = catalog_get("lq-scalar")
        prob.theta = lambda x, u, t: (u**2).sum(axis=1)
        prob.grad_theta_x = lambda x, u, t: np.zeros_like(x)
        prob.grad_theta_u = lambda x, u, t: 2.0 * u
        region = Region(x_low=[-1.0], x_high=[1.0], u_low=[-1.0], u_high=[1.0])
        le = lipschitz_estimate(prob, region, budget=512)
        assert le.value == pytest.approx(2.0, abs=1e-12)


class TestGronwall:
    def test_no_growth_limit(self):
        g = gronwall_sublevel_bound(
            {"C_R": 0.0, "omega_l1": 0.0, "K1": 0.0, "K2": 0.0},
            T=1.0, x0=[1.0], delta=0.0, p=2.0,
        )
        assert g.xsup == 1.0
        assert g.lambda0 == 0.0

    def test_exact_exponential(self):
        g = gronwall_sublevel_bound(
            {"C_R": 1.0, "omega_l1": 0.0, "K1": 0.0, "K2": 0.0},
            T=1.0, x0=[1.0], delta=0.0, p=2.0,
        )
        assert abs(g.xsup - math.e) < 1e-12

    @pytest.mark.parametrize("delta", [0.1, 1.0])
    def test_dominates_simulation(self, rng, delta):
        # dx/dt = x + w with a perturbation of discrete norm just below delta.
        T, N, p = 1.0, 200, 2.0
        g = make_uniform_grid(T, N)
        bound = gronwall_sublevel_bound(
            {"C_R": 1.0, "omega_l1": 0.0, "K1": 0.0, "K2": 0.0},
            T=T, x0=[1.0], delta=delta, p=p,
        ).xsup
        for _ in range(25):
            w = rng.standard_normal(N)
            w *= 0.999 * delta / (np.sum(g.dt * np.abs(w) ** p) ** (1.0 / p))
            x = np.empty(N + 1)
            x[0] = 1.0
            for i in range(N):
                x[i + 1] = x[i] + g.dt * (x[i] + w[i])
            assert np.abs(x).max() <= bound


class TestCoerciveLowerBound:
    def test_nonnegative_costs(self):
        bound, ok = coercive_lower_bound("2b", {"zeta_inf": 0.0, "omega_const": 0.0}, 2.0)
        assert bound == 0.0 and ok

    def test_shifted_costs(self):
        # zeta >= -1 and theta >= |u|^2 - 1 on T = 2.
        bound, ok = coercive_lower_bound("2b", {"zeta_inf": -1.0, "omega_const": -1.0}, 2.0)
        assert bound == pytest.approx(-3.0) and ok

    def test_bounded_control_case_matches_gronwall_style(self):
        constants = {"x0_norm": 1.0, "C_R": 1.0, "omega_l1": 0.5, "K1": 0.2, "K2": 0.3}
        bound, ok = coercive_lower_bound("2a", constants, 1.0)
        C1 = (1.0 + 0.5) * math.exp(1.0)
        assert bound == pytest.approx(-C1 * (1.0 + 0.2) - 0.5 - 0.3)
        assert ok

    def test_unknown_case(self):
        with pytest.raises(InvalidArgumentError):
            coercive_lower_bound("4", {}, 1.0)


class TestGrowthFit:
    def test_quadratic_control_growth(self):
        fit = growth_condition_fit(
            lambda x, u, t: (u**2).sum(axis=1),
            order=(2, 1), R=1.0, u_box=(-3.0, 3.0), T=1.0,
            dim_state=1, budget=8192, seed=0,
        )
        assert 0.7 <= fit.C_R <= 1.0
        assert 0.9 <= fit.omega_R.max() <= 1.0 + 1e-12
        assert fit.max_violation == 0.0
        assert not fit.certified

    def test_zero_function(self):
        fit = growth_condition_fit(
            lambda x, u, t: np.zeros(x.shape[0]),
            order=(2, 1), R=1.0, u_box=(-3.0, 3.0), T=1.0, dim_state=1,
        )
        assert fit.C_R == 0.0
        assert np.array_equal(fit.omega_R, np.zeros_like(fit.omega_R))

    def test_exponential_growth_is_box_dependent(self):
        def g(x, u, t):
            return np.exp(u).sum(axis=1)

        fit_small = growth_condition_fit(g, (1, 1), 1.0, (-1.0, 1.0), 1.0,
                                         dim_state=1, seed=1)
        fit_large = growth_condition_fit(g, (1, 1), 1.0, (-4.0, 4.0), 1.0,
                                         dim_state=1, seed=1)
        assert fit_large.C_R > fit_small.C_R
        assert not fit_large.certified


class TestLambdaStar:
    def test_zero_lipschitz(self):
        assert lambda_star_bound(0.0, 0.5, 3.0) == 3.0

    def test_arithmetic(self):
        assert lambda_star_bound(1.0, 0.5, 0.0) == 2.0

    def test_monotone(self):
        base = lambda_star_bound(1.0, 0.5, 0.0)
        assert lambda_star_bound(2.0, 0.5, 0.0) > base
        assert lambda_star_bound(1.0, 0.25, 0.0) > base
        assert lambda_star_bound(1.0, 0.5, 10.0) > base

    def test_invalid_rate(self):
        with pytest.raises(InvalidArgumentError):
            lambda_star_bound(1.0, 0.0, 0.0)


class TestCertificatePipeline:
    def test_lq_scalar_constants(self):
        prob = catalog_get("lq-scalar")
        entry = catalog_entry("lq-scalar")
        cert = build_certificate(
            prob, entry.cert_constants, u_box=entry.cert_u_box,
            delta=entry.cert_delta, budget=2048, seed=0,
        )
        # No state dependence in the dynamics: M = 0, omega = 1, a = 1/2.
        assert cert.M == 0.0
        assert cert.omega == 1.0
        assert cert.a == 0.5
        assert cert.lambda0 == pytest.approx(math.e, rel=1e-12)
        # The sampling lattice contains the region corners, so L is exactly
        # 2 * (1.1 * 3e) + 2 * 2 on this problem (regression value).
        assert cert.L == pytest.approx(6.6 * math.e + 4.0, rel=1e-12)
        assert cert.lambda_star == pytest.approx((6.6 * math.e + 4.0) / 0.5, rel=1e-12)
        assert cert.lambda_star >= cert.L / cert.a
        assert cert.provenance["L"] == "sampled"
        assert math.isfinite(cert.lambda_star)

    def test_deterministic_given_seed(self):
        prob = catalog_get("lq-scalar")
        entry = catalog_entry("lq-scalar")
        c1 = build_certificate(prob, entry.cert_constants, u_box=entry.cert_u_box,
                               budget=512, seed=7)
        c2 = build_certificate(prob, entry.cert_constants, u_box=entry.cert_u_box,
                               budget=512, seed=7)
        assert (c1.L, c1.M, c1.lambda_star) == (c2.L, c2.M, c2.lambda_star)


class TestPlateauExperiment:
    def test_grid_must_increase(self):
        prob = catalog_get("lq-scalar")
        with pytest.raises(InvalidArgumentError):
            exactness_plateau_experiment(
                prob, [1.0, 1.0], grid=make_uniform_grid(1.0, 10)
            )

    def test_small_lambdas_no_plateau(self):
        prob = catalog_get("lq-scalar")
        cfg = SolverConfig(max_inner=400, tol_stat=1e-5, tol_feas=1e-4)
        rep = exactness_plateau_experiment(
            prob, [1e-4, 1e-3], cfg, grid=make_uniform_grid(1.0, 20)
        )
        assert not rep.detected
        assert rep.plateau_lambda is None
        assert len(rep.entries) == 2
