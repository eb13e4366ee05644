"""Tests for flow maps, barrier subsolutions, and spreading checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfpcert.model import (
    ContractError,
    CustomModel,
    FitzHughNagumo,
    ValidationError,
    to_general_form,
)
from kfpcert.positivity import (
    AnisotropicBall,
    SubsolutionParams,
    eval_D,
    eval_subsolution,
    flow_X,
    harris_mu_empirical,
    pointwise_lower_bound,
    spreading_check,
    subsolution_params,
    tau_ceiling,
    verify_subsolution,
)
from kfpcert.solver import GridField, build_grid


@pytest.fixture(scope="module")
def worked_params():
    return subsolution_params(M=1.0, V=0.0, r=1.0, tau=0.01, alpha_spread=2.0)


@pytest.fixture(scope="module")
def fhn_general():
    return to_general_form(FitzHughNagumo(a=1.0, b=1.0, c=1.0))


def linear_drift_model(slope):
    """Model whose transport field is -slope * x (Lipschitz constant slope)."""
    return to_general_form(
        CustomModel(
            phi=lambda x: slope * x,
            b_field=lambda x, v: v,
            K=1.0,
            w_pot=lambda x, v: 0.5 * float(np.sum(np.asarray(v) ** 2)),
            div_x_phi=lambda x: slope,
            div_v_b=lambda x, v: 1.0,
        )
    )


class TestFlow:
    def test_free_transport(self):
        assert flow_X(lambda x: 0.0 * x, 1.0, 2.0, 0.5, 0.0) == pytest.approx(2.0)

    def test_exponential_flow(self):
        # dx/dt = x from x0=1 gives e^t; displacement bound 4t covers e^t - 1
        for t in (0.1, 0.4, 0.69):
            assert flow_X(lambda x: x, 1.0, 0.0, t, 1.0) == pytest.approx(
                math.exp(t), rel=1e-9
            )
            assert math.exp(t) - 1.0 <= 4.0 * t

    def test_time_zero(self):
        assert flow_X(lambda x: x, 1.0, 0.0, 0.0, 1.0) == 1.0

    def test_window_enforced(self):
        with pytest.raises(ContractError, match="window"):
            flow_X(lambda x: x, 1.0, 0.0, 0.7, 1.0)
        with pytest.raises(ContractError, match="window"):
            flow_X(lambda x: 0.0 * x, 0.0, 0.0, 1.0, 0.0)

    def test_wrong_lipschitz_constant_detected(self):
        # true Lipschitz constant is 2; claiming 0.1 breaks the bound
        with pytest.raises(RuntimeError, match="flow bound"):
            flow_X(lambda x: 2.0 * x, 1.0, 0.0, 0.9, 0.1)

    def test_dense_output_matches_point_calls(self):
        X = flow_X(lambda x: x, 1.0, 0.5, 0.6, 1.0, dense=True)
        for s in (0.1, 0.3, 0.6):
            assert X(s) == pytest.approx(flow_X(lambda x: x, 1.0, 0.5, s, 1.0), rel=1e-9)

    @given(
        slope=st.floats(-1.0, 1.0),
        x0=st.floats(-2.0, 2.0),
        v0=st.floats(-2.0, 2.0),
        frac=st.floats(0.05, 0.95),
    )
    @settings(max_examples=25, deadline=None)
    def test_displacement_bound_property(self, slope, x0, v0, frac):
        M = max(abs(slope), 1e-6)
        t = frac * min(1.0, math.log(2.0) / M) * 0.999
        xt = flow_X(lambda x: slope * x, x0, v0, t, M)
        V = (M + 1.0) ** 2 * (abs(v0) + abs(x0))
        assert abs(xt - x0) <= t * V * (1.0 + 1e-8) + 1e-9


class TestTauCeiling:
    def test_worked_value(self):
        assert tau_ceiling(1.0, 0.0, 1.0) == pytest.approx(0.05)

    def test_flow_bound_branch(self):
        # small r with nonzero V makes r^3/2V binding
        assert tau_ceiling(1.0, 10.0, 0.5) == pytest.approx(0.5**3 / 20.0)

    def test_zero_m(self):
        assert tau_ceiling(0.0, 0.0, 1.0) == 1.0


class TestSubsolutionParams:
    def test_worked_coefficients(self, worked_params):
        p = worked_params
        assert p.a == 1.0
        assert p.b == 2.0
        assert p.c == 640.0
        assert p.mu == 512.0

    def test_c_formula_arms(self):
        # c = b max{12, 80(M+1)^2, 80 d (tau/r^2)^3, 40 d tau/r^2}
        p = subsolution_params(M=1.0, V=0.0, r=1.0, tau=0.01, alpha_spread=2.0)
        assert p.c == 2.0 * max(12.0, 320.0, 80.0 * 1e-6, 0.4)

    def test_exponent_balance(self, worked_params):
        # the lambda balance makes the outer cap exactly twice the floor
        assert worked_params.L2 == pytest.approx(2.0 * worked_params.L1, rel=1e-12)

    def test_lambda_closed_form(self, worked_params):
        p = worked_params
        lam2 = 352.0 * (p.c / p.a) * p.alpha_spread**6 * p.scale_max / p.scale_min
        assert p.lam_spread == pytest.approx(math.sqrt(lam2), rel=1e-12)
        assert p.lam_spread > p.alpha_spread

    def test_log_constants_finite_and_ordered(self, worked_params):
        p = worked_params
        assert math.isfinite(p.log_K_spread)
        assert p.log_eps_over_delta < p.log_K_spread < 0.0

    def test_mu_matrix_margin(self, worked_params):
        # the accepted mu satisfies det(P)/tr(P) >= c/20 and the previous
        # power of two does not
        def surrogate(mu, a, b, c):
            p11 = mu * a**2 - a / 2.0 - b
            p22 = mu * b**2 - 1.5 * c
            p12 = -mu * a * b + b + c / 2.0
            tr = p11 + p22
            det = p11 * p22 - p12**2
            return tr, det

        p = worked_params
        tr, det = surrogate(p.mu, p.a, p.b, p.c)
        assert tr > 0.0 and det > 0.0 and det / tr >= p.c / 20.0
        tr2, det2 = surrogate(p.mu / 2.0, p.a, p.b, p.c)
        assert not (tr2 > 0.0 and det2 > 0.0 and det2 / tr2 >= p.c / 20.0)

    def test_tau_ceiling_enforced(self):
        with pytest.raises(ContractError, match="tau"):
            subsolution_params(M=1.0, V=0.0, r=1.0, tau=0.06, alpha_spread=2.0)

    def test_alpha_must_exceed_one(self):
        with pytest.raises(ValidationError, match="alpha"):
            subsolution_params(M=1.0, V=0.0, r=1.0, tau=0.01, alpha_spread=1.0)

    def test_field_invariants_checked(self, worked_params):
        d = worked_params.to_dict()
        d["b"] = 3.0
        with pytest.raises(ValidationError, match="b = 2a"):
            SubsolutionParams(**d)

    @given(
        M=st.floats(1.0, 3.0),
        r=st.floats(0.5, 2.0),
        alpha=st.floats(1.1, 3.0),
    )
    @settings(max_examples=30, deadline=None)
    def test_invariants_over_sweep(self, M, r, alpha):
        tau = 0.5 * tau_ceiling(M, 0.0, r)
        p = subsolution_params(M=M, V=0.0, r=r, tau=tau, alpha_spread=alpha)
        assert p.b == 2.0 * p.a
        assert p.c > 12.0 * p.b
        assert p.a * p.c > p.b**2
        assert p.c >= 80.0 * (M + 1.0) ** 2 * p.b
        assert p.lam_spread > alpha
        assert math.isfinite(p.log_K_spread)


class TestBarrierValues:
    def test_on_characteristic(self, worked_params):
        # Q vanishes at (X_t, v0) so phi = delta - eps ~ delta
        val = eval_subsolution(worked_params, 1.0, 0.005, 0.0, 0.0)
        assert val == pytest.approx(1.0, abs=1e-12)

    def test_far_field_is_minus_eps(self, worked_params):
        val = eval_subsolution(worked_params, 1.0, 0.005, 50.0, 50.0)
        assert val == pytest.approx(-worked_params.eps_over_delta, abs=1e-300)

    def test_time_zero_limit(self, worked_params):
        val = eval_subsolution(worked_params, 2.0, 0.0, 0.5, 0.5)
        assert val == -2.0 * worked_params.eps_over_delta

    def test_outer_boundary_nonpositive(self, worked_params):
        p = worked_params
        R = p.lam_spread * p.r
        for t in (0.001, 0.005, 0.009):
            for x, v in ((0.0, R), (R**3, 0.0), (R**3, -R)):
                assert eval_subsolution(p, 1.0, t, x, v) <= 0.0

    def test_time_window_enforced(self, worked_params):
        with pytest.raises(ContractError, match="tau"):
            eval_subsolution(worked_params, 1.0, 0.01, 0.0, 0.0)
        with pytest.raises(ContractError, match="tau"):
            eval_subsolution(worked_params, 1.0, -0.001, 0.0, 0.0)

    def test_positive_delta_required(self, worked_params):
        with pytest.raises(ValidationError, match="delta"):
            eval_subsolution(worked_params, 0.0, 0.005, 0.0, 0.0)


class TestZeroOrderCoefficient:
    def test_zero_everything(self):
        g = to_general_form(
            CustomModel(
                phi=lambda x: 0.0 * x,
                b_field=lambda x, v: 0.0 * v,
                K=1.0,
                w_pot=lambda x, v: 0.0,
            )
        )
        assert eval_D(g, lambda t, x, v: 0.0, 0.0, 1.0, 2.0) == pytest.approx(0.0)

    def test_ornstein_uhlenbeck_point(self):
        # A = v, Phi = 0, C = 0 at v=2: -1 - 1/2 + 2 = 1/2
        g = linear_drift_model(0.0)
        assert eval_D(g, lambda t, x, v: 0.0, 0.0, 0.0, 2.0) == pytest.approx(0.5)

    def test_langevin_quadratic_in_v(self):
        # A = v + x (classical force): D = -(v+x)^2/4 - 1/2 + v(v+x)/2 + C
        g = to_general_form(
            CustomModel(
                phi=lambda x: 0.0 * x,
                b_field=lambda x, v: v + x,
                K=1.0,
                w_pot=lambda x, v: 0.5 * float(np.sum(np.asarray(v) ** 2))
                + float(np.sum(np.asarray(x) * np.asarray(v))),
                div_v_b=lambda x, v: 1.0,
            )
        )
        rng = np.random.default_rng(3)
        for _ in range(12):
            x, v = rng.uniform(-3, 3, size=2)
            expected = -0.25 * (v + x) ** 2 - 0.5 + 0.5 * v * (v + x) + 0.7
            got = eval_D(g, lambda t, xx, vv: 0.7, 0.0, x, v)
            assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_divergence_fallback(self):
        g_closed = linear_drift_model(0.0)
        g_open = to_general_form(
            CustomModel(
                phi=lambda x: 0.0 * x,
                b_field=lambda x, v: v,
                K=1.0,
                w_pot=lambda x, v: 0.5 * float(np.sum(np.asarray(v) ** 2)),
            )
        )
        a = eval_D(g_closed, lambda t, x, v: 0.0, 0.0, 0.3, 1.7)
        b = eval_D(g_open, lambda t, x, v: 0.0, 0.0, 0.3, 1.7)
        assert a == pytest.approx(b, rel=1e-8)


class TestVerifySubsolution:
    def test_worked_set(self, worked_params, fhn_general):
        rep = verify_subsolution(worked_params, fhn_general, samples=2**14)
        assert rep.ok
        assert rep.max_violation <= 1e-8
        assert rep.max_L_phi <= 0.0
        assert all(rep.boundary_ok.values())
        assert rep.K_spread_ok
        assert rep.failures == []

    def test_broken_mu_reports_witness(self, worked_params, fhn_general):
        bad = SubsolutionParams(**{**worked_params.to_dict(), "mu": 1.0})
        rep = verify_subsolution(bad, fhn_general, samples=2**12)
        assert not rep.ok
        assert rep.witness is not None
        assert any(f[0] == "sign" for f in rep.failures)

    def test_randomized_sweep(self):
        rng = np.random.default_rng(11)
        for _ in range(8):
            M = rng.uniform(1.0, 3.0)
            r = rng.uniform(0.5, 2.0)
            alpha = rng.uniform(1.1, 3.0)
            x0, v0 = rng.uniform(-0.5, 0.5, size=2)
            V = (M + 1.0) ** 2 * (abs(x0) + abs(v0))
            tau = 0.5 * tau_ceiling(M, V, r)
            p = subsolution_params(
                M=M, V=V, r=r, tau=tau, alpha_spread=alpha, x0=x0, v0=v0
            )
            g = linear_drift_model(M)
            rep = verify_subsolution(p, g, samples=2**11, seed=7)
            assert rep.ok, (M, r, alpha, rep.failures)

    def test_report_serializes(self, worked_params, fhn_general):
        import json

        rep = verify_subsolution(worked_params, fhn_general, samples=2**10)
        blob = json.dumps(rep.to_dict(), sort_keys=True)
        assert "max_violation" in blob

    def test_sample_floor(self, worked_params, fhn_general):
        with pytest.raises(ContractError, match="samples"):
            verify_subsolution(worked_params, fhn_general, samples=10)


class TestAnisotropicBall:
    def test_membership_rule(self):
        ball = AnisotropicBall(0.0, 0.0, 0.5)
        assert ball.contains(0.1, 0.4)
        assert not ball.contains(0.2, 0.4)
        assert ball.contains(0.125, -0.5)
        assert not ball.contains(0.0, 0.51)

    def test_mask_counts_scale_with_r_cubed(self):
        grid = build_grid(2.0, 2.0, 160, 160)
        small = AnisotropicBall(0.0, 0.0, 0.5).mask(grid)
        big = AnisotropicBall(0.0, 0.0, 1.0).mask(grid)
        assert small.sum() > 0
        assert big.sum() > 4 * small.sum()

    def test_empty_radius_rejected(self):
        with pytest.raises(ValidationError, match="radius"):
            AnisotropicBall(0.0, 0.0, 0.0)


def constant_traj(grid, value, times):
    return [
        GridField(grid=grid, data=np.full((grid.nx, grid.nv), value), t=t)
        for t in times
    ]


class TestSpreadingCheck:
    def test_constant_field(self):
        grid = build_grid(2.0, 2.0, 64, 64)
        traj = constant_traj(grid, 2.0, [0.0, 0.01, 0.025, 0.035])
        out = spreading_check(traj, 0.0, 0.0, 0.5, 0.04, 2.0, delta=1.0)
        assert out["ok"] and out["hypothesis_met"]
        assert out["K_emp"] == pytest.approx(2.0)

    def test_hypothesis_not_met(self):
        grid = build_grid(2.0, 2.0, 64, 64)
        traj = constant_traj(grid, 0.5, [0.0, 0.01, 0.025, 0.035])
        out = spreading_check(traj, 0.0, 0.0, 0.5, 0.04, 2.0, delta=1.0)
        assert not out["ok"]
        assert out["hypothesis_met"] is False
        assert out["K_emp"] is None

    def test_alpha_one_trivial(self):
        grid = build_grid(2.0, 2.0, 64, 64)
        traj = constant_traj(grid, 1.5, [0.0, 0.01, 0.025, 0.035])
        out = spreading_check(traj, 0.0, 0.0, 0.5, 0.04, 1.0, delta=1.0)
        assert out["K_emp"] >= 1.0

    def test_window_coverage_required(self):
        grid = build_grid(2.0, 2.0, 64, 64)
        traj = constant_traj(grid, 1.5, [0.0, 0.005])
        with pytest.raises(ContractError, match="cover"):
            spreading_check(traj, 0.0, 0.0, 0.5, 0.04, 2.0, delta=1.0)


class TestPointwiseLowerBound:
    def test_uniform_datum(self):
        grid = build_grid(2.0, 2.0, 64, 64)
        X, V = grid.centers()
        data = np.where(X**2 + V**2 <= 1.0, 1.0, 0.0)
        f0 = GridField(grid=grid, data=data, t=0.0)
        f1 = GridField(grid=grid, data=0.5 * data + 0.01, t=0.1)
        out = pointwise_lower_bound([f0, f1], R=1.0, rho=0.5)
        assert out["gamma_emp"] > 0.0
        t, x, v = out["witness"]
        assert t == 0.1 and x**2 + v**2 <= 0.25 + 1e-9

    def test_whole_domain_mean_value(self):
        # rho covering the box: max over the box >= mean, so gamma_emp is at
        # least mass_in_B_R / (mass_total * |domain|) = 1/|domain| here
        grid = build_grid(2.0, 2.0, 64, 64)
        X, V = grid.centers()
        data = np.exp(-(X**2 + V**2))
        f0 = GridField(grid=grid, data=data, t=0.0)
        out = pointwise_lower_bound([f0, f0], R=10.0, rho=10.0)
        domain = (2.0 * 2.0) * (2.0 * 2.0)
        mass = float(np.sum(data)) * grid.cell_volume
        assert out["gamma_emp"] >= 1.0 / domain * (mass / mass) * 0.99

    def test_support_outside_ball_rejected(self):
        grid = build_grid(4.0, 4.0, 64, 64)
        X, V = grid.centers()
        data = np.where((X - 3.0) ** 2 + V**2 <= 0.25, 1.0, 0.0)
        f0 = GridField(grid=grid, data=data, t=0.0)
        with pytest.raises(ContractError, match="no mass"):
            pointwise_lower_bound([f0, f0], R=1.0, rho=1.0)

    def test_negative_datum_rejected(self):
        grid = build_grid(2.0, 2.0, 32, 32)
        f0 = GridField(grid=grid, data=np.full((32, 32), -1.0), t=0.0)
        with pytest.raises(ContractError, match="nonnegative"):
            pointwise_lower_bound([f0, f0], R=1.0, rho=1.0)


class TestEmpiricalMinorization:
    def test_formula(self):
        assert harris_mu_empirical(0.4, 0.3) == pytest.approx(0.06)

    def test_positivity_required(self):
        with pytest.raises(ContractError):
            harris_mu_empirical(0.0, 1.0)
        with pytest.raises(ContractError):
            harris_mu_empirical(1.0, -0.1)
