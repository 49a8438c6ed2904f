import math

import numpy as np
import pytest

from lpbound.inference import (
    InferenceConfig,
    InferenceError,
    ThetaEstimate,
    asymptotic_variance,
    ball_constrained_lstsq,
    bootstrap_se,
    combine_two_sided,
    find_triplet,
    run_inference,
    split_sample,
)
from lpbound.estimators import PenaltyConfig
from lpbound.linalg import LpParams, vectorize

from conftest import example1_params


def _random_config(rng, d=2, q=4):
    A = np.sort(rng.choice(q, size=rng.integers(2, q + 1), replace=False))
    x = rng.normal(size=d)
    v = np.zeros(q)
    v[A] = rng.normal(size=A.size)
    root = rng.normal(size=(d + q * d + q, d + q * d + q))
    sigma = root @ root.T
    return A, x, v, sigma


def _stat_gradient(A, x, v, d, q):
    """Gradient of v_A'(c_A - M_A x) in theta = (p, vec M, c)."""
    g = np.zeros(d + q * d + q)
    for j in A:
        g[d + q * d + j] = v[j]
        for i in range(d):
            g[d + i * q + j] = -v[j] * x[i]
    return g


class TestSplitSample:
    def test_sizes_and_disjointness(self):
        f1, f2 = split_sample(7, 0.5, 123)
        assert (len(f1), len(f2)) == (3, 4)
        assert sorted(np.concatenate([f1, f2]).tolist()) == list(range(7))

    def test_deterministic(self):
        assert np.array_equal(split_sample(100, 0.5, 9)[0], split_sample(100, 0.5, 9)[0])

    def test_degenerate_split_rejected(self):
        with pytest.raises(InferenceError):
            split_sample(1, 0.5, 0)


class TestBallConstrainedLstsq:
    def test_interior_solution_is_least_squares(self):
        # v is indexed by the rows of `mat`; the residual is rhs - mat' v.
        mat = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
        rhs = np.array([1.0, 2.0])
        free = np.linalg.lstsq(mat.T, rhs, rcond=None)[0]
        sol = ball_constrained_lstsq(mat, rhs, 10.0)
        assert np.allclose(sol, free, atol=1e-10)

    def test_binding_radius(self):
        mat = np.eye(2)
        rhs = np.array([3.0, 4.0])
        sol = ball_constrained_lstsq(mat, rhs, 1.0)
        assert abs(np.linalg.norm(sol) - 1.0) < 1e-8
        assert np.allclose(sol, rhs / 5.0, atol=1e-8)

    def test_kkt_conditions_on_random_problems(self, rng):
        for _ in range(50):
            m, k = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            mat = rng.normal(size=(m, k))
            rhs = rng.normal(size=k)
            radius = float(rng.uniform(0.1, 2.0))
            sol = ball_constrained_lstsq(mat, rhs, radius)
            assert np.linalg.norm(sol) <= radius + 1e-8
            grad = mat @ (mat.T @ sol - rhs)
            if np.linalg.norm(sol) < radius - 1e-6:
                # interior: the residual gradient vanishes on the row space
                assert np.linalg.norm(grad) < 1e-6 * (1.0 + np.linalg.norm(rhs))
            else:
                # boundary: gradient anti-parallel to the solution
                cross = grad - (grad @ sol) / (sol @ sol) * sol
                assert np.linalg.norm(cross) < 1e-6 * (1.0 + np.linalg.norm(grad))


class TestFindTriplet:
    def test_degenerate_instance(self):
        params = example1_params(0.0)
        triplet = find_triplet(params, np.full(4, 2.0), 50.0)
        assert triplet.A.tolist() == [0, 1, 2]
        assert np.allclose(triplet.x, [-1.0, -1.0], atol=1e-9)
        assert np.allclose(triplet.v[3], 0.0)
        # v reproduces the objective through the binding rows
        assert np.allclose(params.M[triplet.A].T @ triplet.v[triplet.A], params.p, atol=1e-6)


class TestAsymptoticVariance:
    def test_matches_direct_quadratic_form(self, rng):
        for _ in range(40):
            A, x, v, sigma = _random_config(rng)
            direct = float(
                _stat_gradient(A, x, v, 2, 4) @ sigma @ _stat_gradient(A, x, v, 2, 4)
            )
            closed = asymptotic_variance(A, x, v, sigma)
            assert abs(closed - direct) < 1e-8 * (1.0 + abs(direct))

    def test_quadratic_scaling_in_v(self, rng):
        A, x, v, sigma = _random_config(rng)
        base = asymptotic_variance(A, x, v, sigma)
        assert abs(asymptotic_variance(A, x, 3.0 * v, sigma) - 9.0 * base) < 1e-8 * (1 + base)

    def test_zero_sigma(self, rng):
        A, x, v, _ = _random_config(rng)
        assert asymptotic_variance(A, x, v, np.zeros((14, 14))) == 0.0

    def test_non_psd_sigma_rejected(self, rng):
        A, x, v, sigma = _random_config(rng)
        bad = sigma - 2.0 * np.linalg.eigvalsh(sigma)[-1] * np.eye(sigma.shape[0])
        with pytest.raises(InferenceError):
            asymptotic_variance(A, x, v, bad)


class TestBootstrapSe:
    def test_matches_analytic_for_gaussian_noise(self, rng):
        A, x, v, sigma = _random_config(rng)
        root = np.linalg.cholesky(sigma + 1e-9 * np.eye(14))
        theta0 = rng.normal(size=14)
        d, q = 2, 4

        def resampler(seed):
            draw = theta0 + root @ np.random.default_rng(seed).normal(size=14)
            p, vecM, c = draw[:d], draw[d : d + q * d], draw[d + q * d :]
            M = vecM.reshape((q, d), order="F")
            return LpParams(p, M, c, (np.full(d, -10.0), np.full(d, 10.0)))

        se = bootstrap_se(resampler, A, x, v, B=800, seed=5)
        analytic = math.sqrt(asymptotic_variance(A, x, v, sigma))
        assert abs(se - analytic) < 0.1 * analytic

    def test_requires_enough_draws(self, rng):
        A, x, v, sigma = _random_config(rng)
        with pytest.raises(InferenceError):
            bootstrap_se(lambda s: None, A, x, v, B=10, seed=0)


class TestRunInference:
    @staticmethod
    def _gaussian_estimator(rows, template):
        def estimate(idx):
            sub = rows[idx]
            theta = sub.mean(axis=0)
            d, q = template.d, template.q
            M = theta[d : d + q * d].reshape((q, d), order="F")
            params = LpParams(theta[:d], M, theta[d + q * d :], template.box)
            return ThetaEstimate(params=params, sigma=np.atleast_2d(np.cov(sub.T)))

        return estimate

    def _rows(self, rng, n, noise):
        template = example1_params(0.0)
        theta = np.concatenate([template.p, vectorize(template.M), template.c])
        return theta + noise * rng.normal(size=(n, theta.size)), template

    def test_deterministic_given_seed(self, rng):
        rows, template = self._rows(rng, 400, 0.01)
        cfg = InferenceConfig(penalty=PenaltyConfig(w=2.0))
        a = run_inference(400, self._gaussian_estimator(rows, template), cfg, seed=3)
        b = run_inference(400, self._gaussian_estimator(rows, template), cfg, seed=3)
        assert a.estimate == b.estimate and a.se == b.se
        assert a.ci_lower_onesided <= a.estimate <= a.ci_upper_onesided
        assert a.n1 + a.n2 == 400

    def test_zero_noise_flags_degenerate_variance(self, rng):
        rows, template = self._rows(rng, 100, 0.0)
        cfg = InferenceConfig(penalty=PenaltyConfig(w=2.0))
        res = run_inference(100, self._gaussian_estimator(rows, template), cfg, seed=1)
        assert res.degenerate_variance
        assert res.se == 0.0
        assert res.ci_twosided == (res.estimate, res.estimate)

    def test_sigma_floor(self, rng):
        rows, template = self._rows(rng, 100, 0.0)
        cfg = InferenceConfig(penalty=PenaltyConfig(w=2.0), sigma_min=1.0)
        res = run_inference(100, self._gaussian_estimator(rows, template), cfg, seed=1)
        assert res.degenerate_variance
        assert abs(res.se - 1.0 / math.sqrt(res.n2)) < 1e-12

    def test_invalid_alpha_rejected(self):
        with pytest.raises(InferenceError):
            InferenceConfig(alpha=1.5)


class TestCombineTwoSided:
    def _result(self, estimate, se):
        from lpbound.inference import InferenceResult, OptimalTriplet

        t = OptimalTriplet(A=np.array([0]), x=np.zeros(1), v=np.zeros(1))
        return InferenceResult(
            estimate=estimate, se=se, ci_lower_onesided=0.0, ci_upper_onesided=0.0,
            ci_twosided=(0.0, 0.0), triplet=t, n1=1, n2=1,
        )

    def test_interval_and_crossing(self):
        lo, up = self._result(-1.0, 0.1), self._result(1.0, 0.1)
        iv = combine_two_sided(lo, up, 0.05)
        z = 1.959963984540054
        assert abs(iv.lower - (-1.0 - z * 0.1)) < 1e-12
        assert abs(iv.upper - (1.0 + z * 0.1)) < 1e-12
        assert not iv.crossed
        crossed = combine_two_sided(self._result(1.0, 0.01), self._result(-1.0, 0.01), 0.05)
        assert crossed.crossed
