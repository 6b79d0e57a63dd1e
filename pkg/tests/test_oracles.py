import numpy as np
import pytest
from scipy.stats import multivariate_normal

from orthgp.bases import CoupledParams, InducingSets, OrthogonalParams, predict_coupled, predict_orthogonal
from orthgp.errors import CapabilityError
from orthgp.kernels import Kernel, gram_matrix, kernel_diag
from orthgp.likelihoods import GaussianLik
from orthgp.objective import elbo_full
from orthgp.oracles import (
    exact_gp_regression,
    optimal_orthogonal_params,
    optimal_variational_gaussian,
    two_set_conditioning_posterior,
)

from conftest import random_orthogonal, rbf_only

KERNEL = Kernel(1.0, 1.0, 0.5, 0.7)


class TestExactGP:
    def test_single_point(self):
        out = exact_gp_regression([[0.0]], [1.0], rbf_only(), 1.0, [[0.0]])
        np.testing.assert_allclose(out.mean, [0.5], rtol=1e-14)
        np.testing.assert_allclose(out.variance, [0.5], rtol=1e-14)

    def test_zero_targets(self, rng):
        X = rng.normal(size=(6, 1))
        out = exact_gp_regression(X, np.zeros(6), KERNEL, 0.3, X)
        np.testing.assert_array_equal(out.mean, 0.0)
        C = gram_matrix(KERNEL, X) + 0.3 * np.eye(6)
        np.testing.assert_allclose(out.log_marginal, -0.5 * np.linalg.slogdet(2 * np.pi * C)[1], rtol=1e-12)

    def test_log_marginal_matches_scipy(self, rng):
        X = rng.normal(size=(9, 2))
        y = rng.normal(size=9)
        out = exact_gp_regression(X, y, KERNEL, 0.2, X[:2])
        C = gram_matrix(KERNEL, X) + 0.2 * np.eye(9)
        np.testing.assert_allclose(out.log_marginal, multivariate_normal(np.zeros(9), C).logpdf(y), rtol=1e-12)

    def test_uninformative_noise(self, rng):
        X = rng.normal(size=(5, 1))
        Xs = rng.normal(size=(4, 1))
        out = exact_gp_regression(X, rng.normal(size=5), KERNEL, 1e8, Xs)
        assert np.max(np.abs(out.mean)) <= 1e-6
        np.testing.assert_allclose(out.variance, kernel_diag(KERNEL, Xs), atol=1e-6)

    def test_gate(self):
        with pytest.raises(CapabilityError):
            exact_gp_regression(np.zeros((2049, 1)), np.zeros(2049), KERNEL, 1.0, [[0.0]])


class TestOptimum:
    def test_single_point(self):
        a, S = optimal_variational_gaussian([[0.0]], [1.0], rbf_only(), 1.0, np.array([[0.0]]))
        np.testing.assert_allclose(a, [0.5], rtol=1e-14)
        np.testing.assert_allclose(S, [[0.5]], rtol=1e-14)

    def test_covariance_ignores_targets(self, rng):
        X = rng.normal(size=(8, 1))
        ind = InducingSets(rng.normal(size=(3, 1)), rng.normal(size=(2, 1)))
        a0, S0 = optimal_variational_gaussian(X, np.zeros(8), KERNEL, 0.2, ind)
        _, S1 = optimal_variational_gaussian(X, rng.normal(size=8), KERNEL, 0.2, ind)
        np.testing.assert_array_equal(a0, 0.0)
        np.testing.assert_allclose(S0, S1, atol=0)

    def test_inducing_at_data_reproduces_exact_gp(self, rng):
        X = rng.normal(size=(7, 1))
        y = rng.normal(size=7)
        Xs = rng.normal(size=(5, 1))
        ind = InducingSets(X, None)
        p = optimal_orthogonal_params(X, y, KERNEL, 0.25, ind)
        ours = predict_orthogonal(KERNEL, ind, p, Xs)
        ref = exact_gp_regression(X, y, KERNEL, 0.25, Xs)
        np.testing.assert_allclose(ours.mean, ref.mean, atol=1e-8)
        np.testing.assert_allclose(ours.variance, ref.variance, atol=1e-8)

    def test_richer_mean_basis_is_no_worse(self, rng):
        X = rng.normal(size=(10, 1))
        y = np.sin(3 * X[:, 0]) + 0.1 * rng.normal(size=10)
        lik = GaussianLik(0.1)
        beta = X[:3] + 0.01
        coupled = InducingSets(beta, None)
        p_c = optimal_orthogonal_params(X, y, KERNEL, 0.1, coupled)
        best_c = elbo_full((X, y), KERNEL, coupled, p_c, lik).elbo
        ind = InducingSets(beta, X[3:7])
        p_o = optimal_orthogonal_params(X, y, KERNEL, 0.1, ind)
        assert elbo_full((X, y), KERNEL, ind, p_o, lik).elbo >= best_c - 1e-9

    def test_nested_gamma_monotone(self, rng):
        X = rng.normal(size=(12, 1))
        y = np.cos(2 * X[:, 0]) + 0.1 * rng.normal(size=12)
        beta = np.array([[-1.0], [0.0], [1.0]]) + 0.013
        lik = GaussianLik(0.1)
        prev = -np.inf
        for k in range(5):
            ind = InducingSets(beta, X[: 2 * k])
            p = optimal_orthogonal_params(X, y, KERNEL, 0.1, ind)
            val = elbo_full((X, y), KERNEL, ind, p, lik).elbo
            assert val >= prev - 1e-9
            prev = val

    def test_orthogonal_conversion_preserves_mean(self, rng):
        X = rng.normal(size=(9, 1))
        y = rng.normal(size=9)
        ind = InducingSets(rng.normal(size=(3, 1)), rng.normal(size=(3, 1)))
        a, _ = optimal_variational_gaussian(X, y, KERNEL, 0.2, ind)
        p = optimal_orthogonal_params(X, y, KERNEL, 0.2, ind)
        Xs = rng.normal(size=(6, 1))
        direct = gram_matrix(KERNEL, Xs, ind.alpha) @ a
        np.testing.assert_allclose(predict_orthogonal(KERNEL, ind, p, Xs).mean, direct, atol=1e-9)


class TestTwoSetConditioning:
    def test_prior(self, rng):
        ind = InducingSets(rng.normal(size=(3, 1)), rng.normal(size=(2, 1)))
        Xs = rng.normal(size=(4, 1))
        K_b = gram_matrix(KERNEL, ind.beta)
        out = two_set_conditioning_posterior(KERNEL, ind, np.zeros(2), np.zeros(3), K_b, Xs)
        np.testing.assert_allclose(out.mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(out.variance, kernel_diag(KERNEL, Xs), atol=1e-10)

    def test_zero_residue_is_coupled(self, rng):
        ind = InducingSets(rng.normal(size=(3, 1)), rng.normal(size=(2, 1)))
        m = rng.normal(size=3)
        A = rng.normal(size=(3, 3))
        S = A @ A.T * 0.2 + 0.1 * np.eye(3)
        Xs = rng.normal(size=(5, 1))
        out = two_set_conditioning_posterior(KERNEL, ind, np.zeros(2), m, S, Xs)
        ref = predict_coupled(KERNEL, ind.beta, CoupledParams(m, np.linalg.cholesky(S)), Xs)
        np.testing.assert_allclose(out.mean, ref.mean, atol=1e-8)
        np.testing.assert_allclose(out.variance, ref.variance, atol=1e-8)

    def test_matches_orthogonal_predictive(self, rng):
        ind, p = random_orthogonal(rng, 4, 3, d=2)
        g = ind.grams(KERNEL)
        Xs = rng.normal(size=(6, 2))
        out = two_set_conditioning_posterior(KERNEL, ind, g.K_gamma_perp @ p.a_gamma, g.K_beta @ p.a_beta, p.S, Xs)
        ref = predict_orthogonal(KERNEL, ind, p, Xs)
        np.testing.assert_allclose(out.mean, ref.mean, atol=1e-8)
        np.testing.assert_allclose(out.variance, ref.variance, atol=1e-8)

    def test_exact_conditional_reproduces_exact_gp(self, rng):
        X = rng.normal(size=(6, 1))
        y = rng.normal(size=6)
        Xs = rng.normal(size=(4, 1))
        C = gram_matrix(KERNEL, X) + 0.3 * np.eye(6)
        K = gram_matrix(KERNEL, X)
        m = K @ np.linalg.solve(C, y)
        S = K - K @ np.linalg.solve(C, K)
        out = two_set_conditioning_posterior(KERNEL, InducingSets(X, None), np.zeros(0), m, S, Xs)
        ref = exact_gp_regression(X, y, KERNEL, 0.3, Xs)
        np.testing.assert_allclose(out.mean, ref.mean, atol=1e-8)
        np.testing.assert_allclose(out.variance, ref.variance, atol=1e-8)

    def test_gate(self):
        ind = InducingSets(np.arange(300.0)[:, None], np.arange(300.0)[:, None] + 0.5)
        with pytest.raises(CapabilityError):
            two_set_conditioning_posterior(KERNEL, ind, np.zeros(300), np.zeros(300), np.eye(300), [[0.0]])


def test_orthogonal_optimum_is_a_fixed_point(rng):
    X = rng.normal(size=(10, 1))
    y = rng.normal(size=10)
    ind = InducingSets(rng.normal(size=(3, 1)), rng.normal(size=(2, 1)))
    p = optimal_orthogonal_params(X, y, KERNEL, 0.2, ind)
    lik = GaussianLik(0.2)
    best = elbo_full((X, y), KERNEL, ind, p, lik).elbo
    for _ in range(5):
        q = OrthogonalParams(p.a_gamma + 1e-3 * rng.normal(size=2), p.a_beta + 1e-3 * rng.normal(size=3), p.L)
        assert elbo_full((X, y), KERNEL, ind, q, lik).elbo <= best
