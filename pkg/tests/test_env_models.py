import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from rwre.env_models import (
    EnvModel,
    ThetaBox,
    TwoPointKnown,
    classify_regime,
    e_log_rho,
    moment_condition,
    moment_jacobian,
    rho_moment,
    sample_environment,
    solve_kappa,
    temkin_speed,
)
from rwre.errors import DomainError, InfiniteMomentError

EX1 = EnvModel.two_point_known(0.4, 0.7, 0.3)
EX2 = EnvModel.two_point_free(0.3, 0.4, 0.7)
EX3 = EnvModel.beta(5.0, 1.0)


class TestModelValidation:
    def test_atoms_must_be_ordered(self):
        with pytest.raises(DomainError):
            TwoPointKnown(0.7, 0.4)

    @pytest.mark.parametrize("theta", [(0.3, 0.7, 0.4), (0.3, 0.0, 0.7), (1.2, 0.4, 0.7)])
    def test_two_point_free_rejects(self, theta):
        with pytest.raises(DomainError):
            EnvModel.two_point_free(*theta)

    def test_beta_needs_ballistic_constraint(self):
        with pytest.raises(DomainError):
            EnvModel.beta(2.0, 1.5)

    def test_theta_outside_box(self):
        with pytest.raises(DomainError):
            EnvModel.two_point_known(0.4, 0.7, 0.999)

    def test_dimension_matches_family(self):
        assert (EX1.dim, EX2.dim, EX3.dim) == (1, 3, 2)

    def test_default_boxes(self):
        assert EX1.box.lower == (0.01,) and EX1.box.upper == (0.99,)
        assert EX2.box.coupling == (2, 1, 0.05)
        assert EX3.box.coupling == (0, 1, 1.05)

    def test_dict_round_trip(self):
        for model in (EX1, EX2, EX3):
            assert EnvModel.from_dict(model.to_dict()) == model


class TestThetaBox:
    def test_projection_feasible(self):
        box = EX2.box
        theta = box.project([0.5, 0.6, 0.58])
        assert box.contains(theta, tol=1e-12)
        assert theta[2] - theta[1] == pytest.approx(0.05)

    def test_projection_identity_inside(self):
        theta = np.array([0.3, 0.4, 0.7])
        np.testing.assert_array_equal(EX2.box.project(theta), theta)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-5, 20), min_size=2, max_size=2))
    def test_beta_projection_always_feasible(self, theta):
        box = EX3.box
        assert box.contains(box.project(theta), tol=1e-12)

    def test_boundary_detection(self):
        box = ThetaBox((0.01,), (0.99,))
        assert box.on_boundary([0.01])
        assert not box.on_boundary([0.3])


class TestSampling:
    def test_degenerate_weight(self):
        model = EnvModel(TwoPointKnown(0.4, 0.7), (1.0,), ThetaBox((0.0,), (1.0,)))
        omega = sample_environment(model, 0, 4, np.random.default_rng(0))
        np.testing.assert_array_equal(omega, [0.4] * 5)

    def test_two_point_frequency(self):
        omega = sample_environment(EX1, -50_000, 49_999, np.random.default_rng(1))
        assert len(omega) == 100_000
        assert np.mean(omega == 0.4) == pytest.approx(0.3, abs=0.01)

    def test_beta_mean(self):
        omega = sample_environment(EX3, 0, 99_999, np.random.default_rng(2))
        assert omega.mean() == pytest.approx(5 / 6, abs=0.01)

    def test_range_must_contain_origin(self):
        with pytest.raises(DomainError):
            sample_environment(EX1, 1, 5, np.random.default_rng(0))

    def test_determinism(self):
        a = sample_environment(EX3, -10, 10, np.random.default_rng(42))
        b = sample_environment(EX3, -10, 10, np.random.default_rng(42))
        assert a.tobytes() == b.tobytes()


class TestMoments:
    def test_two_point_mean_ratio(self):
        assert rho_moment(EX1, 1.0) == pytest.approx(0.75, rel=1e-14)

    def test_beta_mean_ratio(self):
        assert rho_moment(EX3, 1.0) == pytest.approx(0.25, rel=1e-12)

    def test_beta_infinite_moment(self):
        with pytest.raises(InfiniteMomentError):
            rho_moment(EX3, 5.0)

    def test_beta_moment_identity_grid(self):
        for alpha in np.linspace(2.0, 10.0, 17):
            for beta in np.linspace(0.5, 3.0, 11):
                if alpha <= beta + 1:
                    continue
                model = EnvModel.beta(alpha, beta)
                assert rho_moment(model, 1.0) == pytest.approx(beta / (alpha - 1), rel=1e-12, abs=1e-12)

    def test_beta_log_moment_against_quadrature(self):
        from scipy import integrate

        alpha, beta = 5.0, 1.0
        dens = lambda a: a ** (alpha - 1) * (1 - a) ** (beta - 1) / special.beta(alpha, beta)
        val, _ = integrate.quad(lambda a: math.log((1 - a) / a) * dens(a), 0, 1)
        assert e_log_rho(EX3) == pytest.approx(val, abs=1e-10)

    def test_free_reference_third_moment_exceeds_one(self):
        assert rho_moment(EX2, 3.0) == pytest.approx(0.3 * 3.375 + 0.7 * 27 / 343, rel=1e-14)
        assert rho_moment(EX2, 3.0) > 1.0

    def test_moment_condition_flag(self):
        flag = moment_condition(EX2)
        assert flag["e_rho_cubed"] == pytest.approx(1.0676020408163265, rel=1e-14)
        assert not flag["e_rho_cubed_below_one"]
        # Beta(5, 1): B(2, 4) / B(5, 1) = 1 / 4
        assert moment_condition(EX3) == {"e_rho_cubed": pytest.approx(0.25), "e_rho_cubed_below_one": True}
        assert moment_condition(EnvModel.beta(2.5, 1.0))["e_rho_cubed"] is None

    def test_symmetric_temkin_pair(self):
        model = EnvModel.two_point_known(0.3, 0.7, 0.5)
        rho = 0.7 / 0.3
        assert rho_moment(model, 1.0) == pytest.approx(0.5 * rho + 0.5 / rho)
        report = classify_regime(model)
        assert report.e_log_rho == pytest.approx(0.0, abs=1e-15)
        assert not report.ballistic

    def test_moment_increasing_beyond_kappa(self):
        kappa = solve_kappa(EX1)
        s = np.linspace(kappa, kappa + 5, 50)
        vals = [rho_moment(EX1, v) for v in s]
        assert np.all(np.diff(vals) > 0)


class TestRegime:
    def test_two_point_known(self):
        report = classify_regime(EX1)
        assert report.transient_right and report.ballistic
        assert report.speed_limit_c == pytest.approx(7.0, rel=1e-12)

    def test_kappa_matches_grid_scan(self):
        # root bracketed by a 1e-6 grid scan of 0.3*1.5^s + 0.7*(3/7)^s - 1
        assert solve_kappa(EX1) == pytest.approx(2.8033635, abs=1e-6)

    def test_beta_regime(self):
        report = classify_regime(EX3)
        assert report.ballistic
        assert report.speed_limit_c == pytest.approx(5 / 3, rel=1e-12)
        # E rho^4 = 5 Gamma(1) Gamma(5) / 120 = 1 exactly
        assert report.kappa == pytest.approx(4.0, abs=1e-8)

    def test_kappa_infinite_when_all_atoms_right_biased(self):
        model = EnvModel.two_point_known(0.6, 0.8, 0.5)
        assert math.isinf(classify_regime(model).kappa)

    def test_left_transient(self):
        model = EnvModel.two_point_known(0.2, 0.4, 0.5)
        report = classify_regime(model)
        assert not report.transient_right and not report.ballistic
        assert report.speed_limit_c is None

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.02, 0.98), st.floats(0.05, 0.45), st.floats(0.5, 0.95))
    def test_kappa_above_one_iff_ballistic(self, p, a1, a2):
        report = classify_regime(EnvModel.two_point_known(a1, a2, p, ThetaBox((0.0,), (1.0,))))
        if report.transient_right:
            assert (report.kappa > 1) == (report.e_rho < 1)
        if report.ballistic:
            assert report.speed_limit_c > 1

    def test_reference_models_ballistic(self):
        for model in (EX1, EX2, EX3):
            assert classify_regime(model).e_rho < 1


class TestMomentJacobian:
    def test_determinant_reference_point(self):
        assert np.linalg.det(moment_jacobian(EX2)) == pytest.approx(0.001701, abs=1e-12)

    def test_determinant_identity_random(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            a1, a2 = np.sort(rng.uniform(0.05, 0.95, 2))
            p = rng.uniform(0.05, 0.95)
            jac = moment_jacobian(EnvModel.two_point_free(p, a1, a2, ThetaBox((0, 0.01, 0.01), (1, 0.99, 0.99), (2, 1, 1e-9))))
            assert np.linalg.det(jac) == pytest.approx(p * (1 - p) * (a1 - a2) ** 4, abs=1e-10)

    def test_beta_jacobian_finite_differences(self):
        def moments(a, b):
            return np.array([a / (a + b), a * (a + 1) / ((a + b) * (a + b + 1))])

        h = 1e-6
        fd = np.array([(moments(5 + h, 1) - moments(5 - h, 1)) / (2 * h),
                       (moments(5, 1 + h) - moments(5, 1 - h)) / (2 * h)])
        np.testing.assert_allclose(moment_jacobian(EX3), fd, rtol=1e-7)


def test_temkin_speed_matches_general_limit():
    a, p = 0.7, 0.8
    report = classify_regime(EnvModel.temkin(a, p))
    assert temkin_speed(a, p) == pytest.approx(9.5)
    assert report.speed_limit_c == pytest.approx(9.5)
