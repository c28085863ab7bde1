import math

import numpy as np
import pytest

from rwre.env_models import EnvModel, TwoPointKnown, temkin_speed
from rwre.errors import DomainError, RegionUnavailableError
from rwre.estimator import (
    EstimateReport,
    Status,
    confidence_region,
    model_mle,
    observed_fisher,
    standardized_error,
    start_points,
    temkin_naive,
)
from rwre.likelihood import criterion, grad_phi
from rwre.streams import substream
from rwre.walk import Environment, Walker

EX1 = EnvModel.two_point_known(0.4, 0.7, 0.3)
EX2 = EnvModel.two_point_free(0.3, 0.4, 0.7)
EX3 = EnvModel.beta(5.0, 1.0)


def simulate_L(model, n, seed, rep=0):
    env = Environment.lazy(model, substream(seed, rep, "env_right"), substream(seed, rep, "env_left"))
    return Walker(env, substream(seed, rep, "walk")).run_to(n).left_counts


class TestMle:
    def test_two_point_known_converges_near_truth(self):
        L = simulate_L(EX1, 5000, 1)
        rep = model_mle(EX1, L)
        assert rep.status is Status.CONVERGED
        assert rep.theta_hat[0] == pytest.approx(0.3, abs=0.05)
        assert rep.grad_norm_at_opt <= 1e-6 * 5000

    def test_beta_converges_near_truth(self):
        L = simulate_L(EX3, 5000, 2)
        rep = model_mle(EX3, L, substream(2, 0, "optimizer"))
        assert rep.status is Status.CONVERGED
        np.testing.assert_allclose(rep.theta_hat, [5.0, 1.0], rtol=0.35)
        assert EX3.box.contains(rep.theta_hat, tol=1e-12)

    def test_two_point_free_runs(self):
        L = simulate_L(EX2, 3000, 3)
        rep = model_mle(EX2, L, substream(3, 0, "optimizer"))
        assert rep.status in (Status.CONVERGED, Status.BOUNDARY)
        assert EX2.box.contains(rep.theta_hat, tol=1e-12)
        assert rep.theta_hat.shape == (3,)

    def test_gradient_vanishes_at_interior_optimum(self):
        L = simulate_L(EX1, 3000, 4)
        rep = model_mle(EX1, L)
        ev = criterion(EX1.family, rep.theta_hat, L)
        assert abs(ev.gradient[0]) <= 1e-6 * 3000
        assert ev.hessian[0, 0] < 0

    def test_zero_counts_hit_boundary(self):
        # ell_n(p) = n log(0.7 - 0.3 p) is maximized at the lower end of the box
        rep = model_mle(EX1, np.zeros(101, dtype=int))
        assert rep.status is Status.BOUNDARY
        assert rep.theta_hat[0] == pytest.approx(0.01)
        with pytest.raises(RegionUnavailableError):
            rep.region(0.05)

    def test_deterministic_given_seed(self):
        L = simulate_L(EX3, 2000, 5)
        a = model_mle(EX3, L, substream(5, 0, "optimizer"))
        b = model_mle(EX3, L, substream(5, 0, "optimizer"))
        assert a.theta_hat.tobytes() == b.theta_hat.tobytes()

    def test_start_points_inside_box(self):
        pts = start_points(EX2.box, np.random.default_rng(0), 8)
        assert len(pts) == 8
        np.testing.assert_allclose(pts[0], EX2.box.project(EX2.box.center()))
        assert all(EX2.box.contains(p, tol=1e-12) for p in pts)


class TestObservedFisher:
    def test_known_family_is_mean_squared_score(self):
        L = simulate_L(EX1, 2000, 6)
        theta = [0.31]
        g = grad_phi(EX1.family, theta, L[1:], L[:-1])[..., 0]
        sigma = observed_fisher(EX1.family, theta, L)
        assert sigma[0, 0] == pytest.approx(np.mean(g**2), rel=1e-12)

    def test_beta_positive_definite(self):
        L = simulate_L(EX3, 3000, 7)
        rep = model_mle(EX3, L, substream(7, 0, "optimizer"))
        np.testing.assert_array_equal(rep.sigma_hat, rep.sigma_hat.T)
        assert np.all(np.linalg.eigvalsh(rep.sigma_hat) > 0)

    def test_free_family_leading_minors(self):
        L = simulate_L(EX2, 4000, 8)
        sigma = observed_fisher(EX2.family, EX2.theta, L)
        minors = [np.linalg.det(sigma[:k, :k]) for k in (1, 2, 3)]
        assert all(m > 0 for m in minors)


def _report(theta, sigma, n=100, status=Status.CONVERGED):
    return EstimateReport(np.asarray(theta, float), np.asarray(sigma, float), status, n, 0.0, 0.0)


class TestConfidenceRegion:
    def test_interval_half_width(self):
        reg = confidence_region(_report([0.3], [[4.0]], n=100), 0.05)
        lo, hi = reg.interval
        half = 1.959963984540054 / math.sqrt(400.0)
        assert lo == pytest.approx(0.3 - half, abs=1e-12)
        assert hi == pytest.approx(0.3 + half, abs=1e-12)
        assert reg.covers([0.3 + 0.99 * half]) and not reg.covers([0.3 + 1.01 * half])

    def test_ellipsoid_threshold(self):
        reg = confidence_region(_report([5.0, 1.0], np.eye(2), n=100), 0.05)
        assert reg.interval is None
        assert reg.threshold == pytest.approx(5.991464547107979, abs=1e-10)
        assert reg.covers([5.2, 1.1])  # statistic 5.0
        assert not reg.covers([5.2, 1.2])  # statistic 8.0

    def test_not_positive_definite(self):
        with pytest.raises(RegionUnavailableError):
            confidence_region(_report([0.3, 0.4], [[1.0, 2.0], [2.0, 1.0]]), 0.05)

    def test_failed_status(self):
        with pytest.raises(RegionUnavailableError):
            confidence_region(_report([0.3], [[1.0]], status=Status.FAILED), 0.05)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, 1.5])
    def test_gamma_range(self, gamma):
        with pytest.raises(ValueError):
            confidence_region(_report([0.3], [[1.0]]), gamma)

    def test_nested_levels(self):
        rep = _report([0.3], [[4.0]])
        widths = [np.diff(rep.region(g).interval)[0] for g in (0.01, 0.05, 0.1)]
        assert widths[0] > widths[1] > widths[2]

    def test_report_dict(self):
        doc = _report([0.3], [[4.0]]).to_dict([0.05])
        assert doc["status"] == "converged"
        assert doc["regions"]["0.05"]["available"]
        doc = _report([0.3], [[4.0]], status=Status.BOUNDARY).to_dict([0.05])
        assert not doc["regions"]["0.05"]["available"]

    def test_standardized_error(self):
        z = standardized_error(_report([0.32], [[4.0]], n=100), [0.3])
        assert z[0] == pytest.approx(10 * 2 * 0.02)


class TestTemkin:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a = rng.uniform(0.55, 0.9)
            p = rng.uniform(a + 0.02, 0.99)
            c = temkin_speed(a, p)
            assert temkin_naive(c * 1000, 1000, a) == pytest.approx(p, abs=1e-12)

    def test_frozen_speed(self):
        assert temkin_speed(0.7, 0.8) == pytest.approx(9.5, abs=1e-14)

    def test_domain(self):
        with pytest.raises(DomainError):
            temkin_naive(10, 1, 0.4)
        with pytest.raises(DomainError):
            temkin_naive(0.5, 1, 0.7)

    def test_temkin_maps_to_known_family(self):
        model = EnvModel.temkin(0.7, 0.8)
        assert isinstance(model.family, TwoPointKnown)
        assert model.theta[0] == pytest.approx(0.2)
