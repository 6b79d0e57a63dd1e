"""Dense reference computations: exact GP regression, the analytic Gaussian-likelihood
optimum, and the two-set prior-conditional-matching posterior.

Everything here is O(n^3) and gated; none of it shares code paths with the
sparse predictive equations beyond kernel evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .bases import GaussianPredictive, InducingSets, OrthogonalParams
from .errors import check_gate
from .kernels import Kernel, as_inputs, gram_matrix

EXACT_GATE = 2048
CONDITIONING_GATE = 512


@dataclass(frozen=True)
class DenseGPResult:
    mean: np.ndarray
    variance: np.ndarray
    log_marginal: float


def _sym(A):
    return 0.5 * (A + A.T)


def exact_gp_regression(X, y, kernel: Kernel, sigma_sq: float, X_star) -> DenseGPResult:
    X = as_inputs(X)
    y = np.asarray(y, dtype=float).ravel()
    X_star = as_inputs(X_star)
    check_gate(X.shape[0], EXACT_GATE, "exact GP regression")
    n = X.shape[0]
    C = _sym(gram_matrix(kernel, X)) + sigma_sq * np.eye(n)
    L = linalg.cholesky(C, lower=True)
    alpha = linalg.cho_solve((L, True), y)
    K_sx = gram_matrix(kernel, X_star, X)
    V = linalg.solve_triangular(L, K_sx.T, lower=True)
    mean = K_sx @ alpha
    variance = kernel.variance - np.sum(V**2, axis=0)
    log_marginal = -0.5 * (y @ alpha) - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi)
    return DenseGPResult(mean, variance, float(log_marginal))


def optimal_variational_gaussian(X, y, kernel: Kernel, sigma_sq: float, inducing):
    """Global optimum of the negative ELBO under a Gaussian likelihood.

    Mean basis mu = Psi_alpha a with alpha = gamma then beta:
        a = (K_{alpha,X} K_{X,alpha} / sigma^2 + K_alpha)^{-1} K_{alpha,X} y / sigma^2
    Covariance (independent of y):
        S = K_beta (K_{beta,X} K_{X,beta} / sigma^2 + K_beta)^{-1} K_beta

    ``inducing`` may be an InducingSets or a bare array of beta locations.
    Returns (a, S).
    """
    X = as_inputs(X)
    y = np.asarray(y, dtype=float).ravel()
    if isinstance(inducing, InducingSets):
        beta, alpha = inducing.beta, inducing.alpha
    else:
        beta = alpha = as_inputs(inducing)
    check_gate(alpha.shape[0], EXACT_GATE, "analytic optimum")
    K_ax = gram_matrix(kernel, alpha, X)
    A = _sym(K_ax @ K_ax.T / sigma_sq + gram_matrix(kernel, alpha))
    a = linalg.solve(A, K_ax @ y / sigma_sq, assume_a="pos")
    K_b = _sym(gram_matrix(kernel, beta))
    K_bx = gram_matrix(kernel, beta, X)
    B = _sym(K_bx @ K_bx.T / sigma_sq + K_b)
    S = _sym(K_b @ linalg.solve(B, K_b, assume_a="pos"))
    return a, S


def optimal_orthogonal_params(X, y, kernel: Kernel, sigma_sq: float, inducing: InducingSets,
                              grams=None) -> OrthogonalParams:
    """The analytic optimum rewritten in orthogonal coordinates.

    Psi_g a1 + Psi_b a2 = (I - P_b) Psi_g a1 + Psi_b (a2 + K_b^{-1} K_bg a1).
    """
    a, S = optimal_variational_gaussian(X, y, kernel, sigma_sq, inducing)
    grams = inducing.grams(kernel) if grams is None else grams
    n_g = inducing.n_gamma
    a_gamma, a_beta = a[:n_g], a[n_g:]
    if n_g:
        a_beta = a_beta + grams.proj_gamma @ a_gamma
    return OrthogonalParams(a_gamma, a_beta, linalg.cholesky(S, lower=True))


def two_set_conditioning_posterior(kernel: Kernel, inducing: InducingSets, m_gamma_perp, m_beta, S_beta,
                                   X_star) -> GaussianPredictive:
    """Dense predictive of q(f) = p(f | f_g, f_b) q(f_g | f_b) q(f_b), where
    q(f_b) = N(m_b, S_b) and q(f_g | f_b) = N(m_{g⊥b} + K_gb K_b^{-1} f_b, K_g - K_gb K_b^{-1} K_bg).

    The joint q(f_g, f_b) is assembled explicitly and f(X*) obtained by exact
    Gaussian conditioning on the stacked inducing values.
    """
    X_star = as_inputs(X_star)
    n_g, n_b = inducing.n_gamma, inducing.n_beta
    check_gate(n_g + n_b + X_star.shape[0], CONDITIONING_GATE, "two-set conditioning")
    m_beta = np.asarray(m_beta, dtype=float).ravel()
    m_gp = np.asarray(m_gamma_perp, dtype=float).ravel()
    S_beta = np.asarray(S_beta, dtype=float)

    K_b = _sym(gram_matrix(kernel, inducing.beta))
    K_g = _sym(gram_matrix(kernel, inducing.gamma))
    K_gb = gram_matrix(kernel, inducing.gamma, inducing.beta)
    T = linalg.solve(K_b, K_gb.T, assume_a="pos").T          # K_gb K_b^{-1}

    joint_mean = np.concatenate([m_gp + T @ m_beta, m_beta])
    cov_gg = K_g + T @ (S_beta - K_b) @ T.T
    cov_gb = T @ S_beta
    joint_cov = _sym(np.block([[cov_gg, cov_gb], [cov_gb.T, S_beta]]))

    K_alpha = _sym(np.block([[K_g, K_gb], [K_gb.T, K_b]]))
    K_sa = gram_matrix(kernel, X_star, inducing.alpha)
    H = linalg.solve(K_alpha, K_sa.T, assume_a="pos").T      # k_{x,alpha} K_alpha^{-1}
    mean = H @ joint_mean
    cond_var = kernel.variance - np.sum(H * K_sa, axis=1)
    variance = cond_var + np.sum((H @ joint_cov) * H, axis=1)
    return GaussianPredictive(mean, variance)
