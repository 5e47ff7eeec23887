import itertools
import math

import numpy as np
import pytest
from scipy import integrate, stats

from dgev import laplace
from dgev.laplace import (
    LaplaceProposal, ProposalError, build_proposal, fd_gradient, fd_neg_hessian, find_mode,
    mh_independence_step, repair_pd,
)
from dgev.model import DatasetSpec, Priors, ThetaTarget
from dgev.simulate import SimSpec, study_params, simulate


class TestFindMode:
    def test_quadratic_1d(self):
        res = find_mode(lambda x: -0.5 * (x[0] - 3.0) ** 2, [0.0])
        assert res.mode[0] == pytest.approx(3.0, abs=1e-6)
        assert res.neg_hessian[0, 0] == pytest.approx(1.0, abs=1e-6)
        assert res.converged

    def test_quadratic_2d(self):
        res = find_mode(lambda v: -v[0] ** 2 - 2 * v[1] ** 2 + v[0] * v[1], [1.3, -0.7])
        np.testing.assert_allclose(res.mode, [0.0, 0.0], atol=1e-4)
        np.testing.assert_allclose(res.neg_hessian, [[2, -1], [-1, 4]], atol=1e-4)

    def test_nonfinite_start(self):
        with pytest.raises(ValueError):
            find_mode(lambda x: -math.inf, [0.0])

    def test_budget_exhausted_reports_best_point(self):
        def rosen(v):
            return -(100 * (v[1] - v[0] ** 2) ** 2 + (1 - v[0]) ** 2)
        x0 = np.array([-1.9, 2.5])
        res = find_mode(rosen, x0, max_iter=1)
        assert isinstance(res.converged, bool)
        assert res.value >= rosen(x0)

    def test_theta_mode_matches_grid(self):
        spec = SimSpec(200, study_params(), seed=77)
        data, beta = simulate(spec)
        target = ThetaTarget(data, beta, spec.params, Priors())

        def h(u):
            return target((u[0], math.exp(u[1]), u[2]))

        res = find_mode(h, [0.4, math.log(0.4), 0.0])
        step = 0.01
        centre = np.round(res.mode / step) * step
        axes = [c + step * np.arange(-8, 9) for c in centre]
        best, arg = -math.inf, None
        for p in itertools.product(*axes):
            v = h(p)
            if v > best:
                best, arg = v, np.array(p)
        # grid maximum must be interior, so it is a genuine local optimum on the grid
        assert np.all(np.abs(arg - centre) < 8 * step - 1e-12)
        assert np.all(np.abs(arg - res.mode) <= step + 1e-12)


class TestFiniteDifferences:
    def test_gradient_hessian_cubic(self):
        def f(v):
            return v[0] ** 3 + 2 * v[0] * v[1] - v[1] ** 2
        x = np.array([0.7, -1.2])
        np.testing.assert_allclose(fd_gradient(f, x), [3 * 0.49 + 2 * -1.2, 2 * 0.7 + 2.4], rtol=1e-7)
        np.testing.assert_allclose(fd_neg_hessian(f, x), -np.array([[6 * 0.7, 2], [2, -2]]),
                                   rtol=1e-6, atol=1e-7)


class TestProposal:
    def test_zero_gradient(self):
        p = build_proposal([1.0, 2.0], np.eye(2), [0.0, 0.0])
        np.testing.assert_array_equal(p.mean, [1.0, 2.0])

    def test_identity(self):
        p = build_proposal([0.0, 0.0, 0.0], np.eye(3), np.zeros(3))
        np.testing.assert_allclose(p.covariance, np.eye(3))

    def test_diagonal(self):
        p = build_proposal([0.0, 0.0], np.diag([2.0, 4.0]), np.zeros(2))
        np.testing.assert_allclose(p.covariance, np.diag([0.5, 0.25]), rtol=1e-14)

    def test_newton_shift(self):
        p = build_proposal([1.0], [[2.0]], [1.0])
        assert p.mean[0] == pytest.approx(1.5)

    def test_log_density(self):
        cov = np.array([[1.0, 0.3], [0.3, 0.5]])
        p = LaplaceProposal.from_cov([0.2, -0.1], cov)
        x = np.array([0.5, 0.4])
        assert p.log_density(x) == pytest.approx(stats.multivariate_normal([0.2, -0.1], cov).logpdf(x))

    def test_repair(self):
        H = np.array([[1.0, 2.0], [2.0, 1.0]])
        fixed, lam = repair_pd(H)
        assert lam > 0
        np.linalg.cholesky(fixed)
        assert np.all(fixed - H == lam * np.eye(2))

    def test_repair_noop(self):
        fixed, lam = repair_pd(np.eye(2))
        assert lam == 0.0

    def test_irreparable(self):
        with pytest.raises(ProposalError):
            repair_pd(np.array([[np.nan, 0.0], [0.0, 1.0]]))
        with pytest.raises(ProposalError):
            repair_pd(np.diag([1.0, -1e9]))


class TestIndependenceMH:
    def test_exact_proposal_always_accepts(self):
        prop = LaplaceProposal.from_cov([0.3], [[2.0]])
        rng = np.random.default_rng(0)
        x, n_acc = np.array([0.0]), 0
        for _ in range(10_000):
            x, acc, _ = mh_independence_step(x, prop.log_density, prop, rng)
            n_acc += acc
        assert n_acc == 10_000

    def test_expected_acceptance(self):
        def log_t(x):
            return -0.5 * x * x - 0.5 * math.log(2 * math.pi)

        def log_q(x):
            return -x * x / 8.0 - 0.5 * math.log(8 * math.pi)

        def integrand(y, x):
            a = log_t(y) - log_q(y) - log_t(x) + log_q(x)
            return math.exp(log_t(x) + log_q(y) + min(0.0, a))

        expected, _ = integrate.dblquad(integrand, -12, 12, -24, 24, epsabs=1e-8)
        prop = LaplaceProposal.from_cov([0.0], [[4.0]])
        rng = np.random.default_rng(1)
        x, lp, n_acc = np.array([0.0]), None, 0
        for _ in range(100_000):
            x, acc, lp = mh_independence_step(x, lambda v: log_t(v[0]), prop, rng, lp)
            n_acc += acc
        assert n_acc / 100_000 == pytest.approx(expected, abs=0.02)

    def test_off_support_never_moves(self):
        prop = LaplaceProposal.from_cov([10.0], [[0.01]])
        rng = np.random.default_rng(2)

        def lp(v):
            return -0.5 * v[0] ** 2 if v[0] < 0 else -math.inf
        x = np.array([-1.0])
        for _ in range(500):
            x, acc, _ = mh_independence_step(x, lp, prop, rng)
            assert not acc
        assert x[0] == -1.0

    def test_random_walk_symmetric(self):
        rng = np.random.default_rng(4)
        x, lp = np.array([0.0]), None
        xs = []
        for _ in range(40_000):
            x, _, lp = laplace.mh_random_walk_step(x, lambda v: -0.5 * v[0] ** 2, 1.5, rng, lp)
            xs.append(x[0])
        assert np.mean(xs) == pytest.approx(0.0, abs=0.06)
        assert np.var(xs) == pytest.approx(1.0, abs=0.08)
