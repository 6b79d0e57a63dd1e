import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orthgp.errors import InputError, NumericalError
from orthgp.kernels import (
    Kernel,
    build_grams,
    cholesky_jitter,
    gram_matrix,
    kernel_diag,
    kernel_eval,
)

from conftest import matern_only, rbf_only


def test_self_covariance_is_total_amplitude():
    k = Kernel(1.0, 1.0, 1.0, 1.0)
    assert kernel_eval(k, [0.3, -1.0], [0.3, -1.0]) == 2.0


def test_rbf_closed_form():
    np.testing.assert_allclose(kernel_eval(rbf_only(), [0.0], [1.0]), np.exp(-0.5), rtol=1e-14)


def test_matern52_closed_form():
    expected = (1 + np.sqrt(5) + 5 / 3) * np.exp(-np.sqrt(5))
    np.testing.assert_allclose(kernel_eval(matern_only(), [0.0], [1.0]), expected, rtol=1e-14)
    np.testing.assert_allclose(expected, 0.5240, atol=1e-4)


def test_single_point_gram():
    k = Kernel(0.7, 2.0, 1.3, 0.5)
    np.testing.assert_allclose(gram_matrix(k, [[0.2]]), [[2.0]], rtol=1e-15)


def test_two_point_rbf_gram():
    e = np.exp(-0.5)
    np.testing.assert_allclose(gram_matrix(rbf_only(), [0.0, 1.0]), [[1, e], [e, 1]], rtol=1e-14)


def test_gram_symmetric(rng):
    X = rng.normal(size=(30, 3))
    K = gram_matrix(Kernel.default(3), X)
    np.testing.assert_array_equal(K, K.T)


def test_diag_matches_gram(rng):
    k = Kernel(0.4, 1.5, 2.0, 0.3)
    X = rng.normal(size=(7, 2))
    np.testing.assert_allclose(kernel_diag(k, X), np.diag(gram_matrix(k, X)))


def test_defaults():
    k = Kernel.default(4)
    assert (k.rbf_lengthscale, k.matern52_lengthscale) == (2.0, pytest.approx(0.2))
    assert k.rbf_amplitude == k.matern52_amplitude == 1.0
    kc = Kernel.default(4, classification=True)
    assert kc.rbf_amplitude == kc.matern52_amplitude == 5.0


@pytest.mark.parametrize("field", ["rbf_amplitude", "rbf_lengthscale", "matern52_amplitude",
                                   "matern52_lengthscale"])
@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_rejects_nonpositive_fields(field, bad):
    with pytest.raises(InputError):
        Kernel(**{field: bad})


def test_dimension_mismatch():
    with pytest.raises(InputError):
        kernel_eval(Kernel(), [0.0, 1.0], [0.0])
    with pytest.raises(InputError):
        gram_matrix(Kernel(), np.zeros((2, 2)), np.zeros((2, 3)))


@given(st.floats(0.0, 10.0))
def test_components_monotone_on_grid(scale):
    k = Kernel(1.0, 0.8, 1.0, 0.3)
    for comp, ell in ((k.rbf, k.rbf_lengthscale), (k.matern52, k.matern52_lengthscale)):
        r = np.linspace(0.0, 10.0 * ell, 200)
        assert np.all(np.diff(comp(r)) <= 0)
    assert k.rbf(scale) <= k.rbf(0.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3,), elements=st.floats(-5, 5)),
       arrays(np.float64, (3,), elements=st.floats(-5, 5)))
def test_swap_invariance(x, y):
    k = Kernel(0.9, 1.1, 1.7, 0.4)
    assert kernel_eval(k, x, y) == kernel_eval(k, y, x)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 25), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_gram_plus_small_jitter_factorizes(n, d, seed):
    X = np.random.default_rng(seed).normal(size=(n, d))
    K = gram_matrix(Kernel.default(d), X)
    np.linalg.cholesky(K + 1e-6 * np.eye(n))


def test_cholesky_identity():
    L, eps = cholesky_jitter(np.eye(3))
    np.testing.assert_array_equal(L, np.eye(3))
    assert eps == 0.0


def test_cholesky_hand_case():
    L, eps = cholesky_jitter(np.array([[4.0, 2.0], [2.0, 5.0]]))
    np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, 2.0]], atol=1e-15)
    assert eps == 0.0


def test_cholesky_rank_deficient():
    A = np.ones((2, 2))
    L, eps = cholesky_jitter(A, 1e-6)
    assert 0 < eps <= 1e-2
    assert np.max(np.abs(L @ L.T - A - eps * np.eye(2))) <= 1e-10


def test_cholesky_escalation_gives_up():
    with pytest.raises(NumericalError) as info:
        cholesky_jitter(np.array([[1.0, 100.0], [100.0, 1.0]]))
    assert info.value.jitter is not None


def test_cholesky_rejects_nonsquare():
    with pytest.raises(InputError):
        cholesky_jitter(np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_cholesky_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 1)) * 0.05  # nearly coincident points
    A = gram_matrix(Kernel.default(1), X)
    L, eps = cholesky_jitter(A, 1e-6)
    assert np.max(np.abs(L @ L.T - A - eps * np.eye(n))) <= 1e-8 * np.max(np.abs(A))
    assert np.all(np.diag(L) > 0)


def test_gram_cache_consistency(rng):
    k = Kernel(1.0, 1.0, 0.5, 0.7)
    beta, gamma = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    g = build_grams(k, beta, gamma)
    np.testing.assert_allclose(g.L_beta @ g.L_beta.T, g.K_beta, atol=1e-12)
    np.testing.assert_allclose(g.K_beta, g.K_beta.T, atol=0)
    np.testing.assert_allclose(g.proj_gamma, np.linalg.solve(g.K_beta, g.K_beta_gamma), atol=1e-10)
    perp = g.K_gamma - g.K_beta_gamma.T @ np.linalg.solve(g.K_beta, g.K_beta_gamma)
    np.testing.assert_allclose(g.K_gamma_perp, perp, atol=1e-10)
    np.testing.assert_allclose(g.logdet_K_beta, np.linalg.slogdet(g.K_beta)[1], atol=1e-10)
