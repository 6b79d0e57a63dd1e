"""Variational parameterizations and their predictive equations.

Four bases share the covariance operator form

    Sigma = (I - P_beta) + Psi_beta K_beta^{-1} S K_beta^{-1} Psi_beta^T

(the inverse-decoupled basis reaches it through S = (K_beta^{-1} + B)^{-1})
and differ in how the mean is spanned:

* coupled:      m(x) = k_{x,beta} K_beta^{-1} m
* hybrid:       m(x) = k_{x,gamma} a_gamma + k_{x,beta} K_beta^{-1} m_beta
* orthogonal:   m(x) = (k_{x,gamma} - k_{x,beta} K_beta^{-1} K_{beta,gamma}) a_gamma + k_{x,beta} a_beta
* inverse:      m(x) = k_{x,alpha} a,  alpha = gamma then beta
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import InputError
from .kernels import (
    GramCache,
    Kernel,
    as_inputs,
    build_grams,
    cholesky_jitter,
    gram_matrix,
    kernel_diag,
    tri_solve,
)


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float)).ravel()


def _tril(L):
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InputError(f"factor must be square, got {L.shape}")
    return np.tril(L)


@dataclass(frozen=True)
class InducingSets:
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        beta = as_inputs(self.beta)
        gamma = np.zeros((0, beta.shape[1])) if self.gamma is None else np.asarray(self.gamma, float)
        if gamma.size == 0:
            gamma = np.zeros((0, beta.shape[1]))
        gamma = as_inputs(gamma)
        if beta.shape[0] < 1:
            raise InputError("need at least one beta inducing point")
        if gamma.shape[1] != beta.shape[1]:
            raise InputError("beta and gamma must share the input dimension")
        if gamma.shape[0] and (gamma[:, None, :] == beta[None, :, :]).all(-1).any():
            raise InputError("beta and gamma must be disjoint point sets")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def n_beta(self) -> int:
        return self.beta.shape[0]

    @property
    def n_gamma(self) -> int:
        return self.gamma.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return np.vstack([self.gamma, self.beta])

    def grams(self, kernel: Kernel, jitter_start: float = 0.0) -> GramCache:
        return build_grams(kernel, self.beta, self.gamma, jitter_start)


class _Params:
    """Shared helpers: arrays in field order, and rebuilding from arrays."""

    def arrays(self):
        return [getattr(self, f.name) for f in fields(self)]

    @classmethod
    def from_arrays(cls, arrays):
        return cls(*arrays)

    @property
    def S(self) -> np.ndarray:
        return self.L @ self.L.T


@dataclass(frozen=True)
class OrthogonalParams(_Params):
    a_gamma: np.ndarray
    a_beta: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a_gamma", _vec(self.a_gamma) if np.size(self.a_gamma) else np.zeros(0))
        object.__setattr__(self, "a_beta", _vec(self.a_beta))
        object.__setattr__(self, "L", _tril(self.L))
        if self.L.shape[0] != self.a_beta.shape[0]:
            raise InputError("a_beta and L disagree on |beta|")


@dataclass(frozen=True)
class CoupledParams(_Params):
    m: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m", _vec(self.m))
        object.__setattr__(self, "L", _tril(self.L))
        if self.L.shape[0] != self.m.shape[0]:
            raise InputError("m and L disagree on |beta|")


@dataclass(frozen=True)
class HybridParams(_Params):
    a_gamma: np.ndarray
    m_beta: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a_gamma", _vec(self.a_gamma) if np.size(self.a_gamma) else np.zeros(0))
        object.__setattr__(self, "m_beta", _vec(self.m_beta))
        object.__setattr__(self, "L", _tril(self.L))
        if self.L.shape[0] != self.m_beta.shape[0]:
            raise InputError("m_beta and L disagree on |beta|")


@dataclass(frozen=True)
class InverseDecoupledParams(_Params):
    """Mean weights over alpha = [gamma; beta] and B = L_B L_Bᵀ."""

    a: np.ndarray
    L_B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a))
        object.__setattr__(self, "L_B", _tril(self.L_B))

    @property
    def B(self) -> np.ndarray:
        return self.L_B @ self.L_B.T

    def split(self, n_gamma: int):
        return self.a[:n_gamma], self.a[n_gamma:]

    def woodbury_factor(self, K_beta):
        """Cholesky of I + L_Bᵀ K_beta L_B."""
        M = np.eye(self.L_B.shape[0]) + self.L_B.T @ K_beta @ self.L_B
        return cholesky_jitter(M)[0]

    def S_matrix(self, K_beta) -> np.ndarray:
        """Equivalent S = (K_beta^{-1} + B)^{-1} = K - K L_B M^{-1} L_Bᵀ K."""
        R = self.woodbury_factor(K_beta)
        W = tri_solve(R, self.L_B.T @ K_beta)
        S = K_beta - W.T @ W
        return 0.5 * (S + S.T)


@dataclass(frozen=True)
class GaussianPredictive:
    mean: np.ndarray
    variance: np.ndarray
    cov: np.ndarray | None = None


BASES = {
    "orthogonal": OrthogonalParams,
    "coupled": CoupledParams,
    "hybrid": HybridParams,
    "inverse": InverseDecoupledParams,
}


def basis_name(params) -> str:
    for name, cls in BASES.items():
        if isinstance(params, cls):
            return name
    raise InputError(f"unknown parameter type {type(params).__name__}")


def _grams_for(kernel, inducing, grams):
    return inducing.grams(kernel) if grams is None else grams


def _direct_covariance(kernel, grams, K_xb, L, X, full_cov):
    # s(x) = (k_x - k_{x,b} K^{-1} k_{b,x}) + ||Lᵀ K^{-1} k_{b,x}||^2
    V = tri_solve(grams.L_beta, K_xb.T)
    P = tri_solve(grams.L_beta, V, trans=1)
    W = L.T @ P
    if full_cov:
        cov = gram_matrix(kernel, X) - V.T @ V + W.T @ W
        cov = 0.5 * (cov + cov.T)
        return np.diag(cov).copy(), cov
    resid = np.maximum(kernel_diag(kernel, X) - np.sum(V**2, axis=0), 0.0)
    return resid + np.sum(W**2, axis=0), None


def predict_orthogonal(kernel, inducing: InducingSets, params: OrthogonalParams, X_star,
                       grams: GramCache | None = None, full_cov: bool = False) -> GaussianPredictive:
    grams = _grams_for(kernel, inducing, grams)
    X_star = as_inputs(X_star)
    K_xb = gram_matrix(kernel, X_star, inducing.beta)
    # K_beta^{-1} K_{beta,gamma} a_gamma is precomputed once per parameter set
    mean = K_xb @ params.a_beta
    if inducing.n_gamma:
        shift = grams.proj_gamma @ params.a_gamma
        mean = mean + gram_matrix(kernel, X_star, inducing.gamma) @ params.a_gamma - K_xb @ shift
    var, cov = _direct_covariance(kernel, grams, K_xb, params.L, X_star, full_cov)
    return GaussianPredictive(mean, var, cov)


def predict_coupled(kernel, beta_locations, params: CoupledParams, X_star,
                    grams: GramCache | None = None, full_cov: bool = False) -> GaussianPredictive:
    beta = as_inputs(beta_locations)
    grams = build_grams(kernel, beta) if grams is None else grams
    X_star = as_inputs(X_star)
    K_xb = gram_matrix(kernel, X_star, beta)
    mean = K_xb @ grams.solve(params.m)
    var, cov = _direct_covariance(kernel, grams, K_xb, params.L, X_star, full_cov)
    return GaussianPredictive(mean, var, cov)


def predict_hybrid(kernel, inducing: InducingSets, params: HybridParams, X_star,
                   grams: GramCache | None = None, full_cov: bool = False) -> GaussianPredictive:
    grams = _grams_for(kernel, inducing, grams)
    X_star = as_inputs(X_star)
    K_xb = gram_matrix(kernel, X_star, inducing.beta)
    mean = K_xb @ grams.solve(params.m_beta)
    if inducing.n_gamma:
        mean = mean + gram_matrix(kernel, X_star, inducing.gamma) @ params.a_gamma
    var, cov = _direct_covariance(kernel, grams, K_xb, params.L, X_star, full_cov)
    return GaussianPredictive(mean, var, cov)


def predict_inverse_decoupled(kernel, inducing: InducingSets, params: InverseDecoupledParams, X_star,
                              grams: GramCache | None = None, full_cov: bool = False) -> GaussianPredictive:
    """s(x) = k_x - k_{x,b} (B^{-1} + K_b)^{-1} k_{b,x}, with
    (B^{-1} + K_b)^{-1} = L_B (I + L_Bᵀ K_b L_B)^{-1} L_Bᵀ so B may be singular."""
    grams = _grams_for(kernel, inducing, grams)
    X_star = as_inputs(X_star)
    if params.a.shape[0] != inducing.n_gamma + inducing.n_beta:
        raise InputError("inverse-decoupled mean weights must cover gamma and beta")
    K_xa = gram_matrix(kernel, X_star, inducing.alpha)
    mean = K_xa @ params.a
    K_xb = K_xa[:, inducing.n_gamma:]
    R = params.woodbury_factor(grams.K_beta)
    W = tri_solve(R, params.L_B.T @ K_xb.T)
    if full_cov:
        cov = gram_matrix(kernel, X_star) - W.T @ W
        cov = 0.5 * (cov + cov.T)
        return GaussianPredictive(mean, np.diag(cov).copy(), cov)
    var = kernel_diag(kernel, X_star) - np.sum(W**2, axis=0)
    return GaussianPredictive(mean, var)


def gamma_residue_mean(kernel, inducing: InducingSets, a_gamma, X_star,
                       grams: GramCache | None = None) -> np.ndarray:
    """(k_{x,gamma} - k_{x,beta} K_beta^{-1} K_{beta,gamma}) a_gamma."""
    X_star = as_inputs(X_star)
    a_gamma = np.asarray(a_gamma, dtype=float).ravel()
    if inducing.n_gamma == 0:
        return np.zeros(X_star.shape[0])
    grams = _grams_for(kernel, inducing, grams)
    K_xb = gram_matrix(kernel, X_star, inducing.beta)
    K_xg = gram_matrix(kernel, X_star, inducing.gamma)
    return K_xg @ a_gamma - K_xb @ (grams.proj_gamma @ a_gamma)


def predict(kernel, inducing: InducingSets, params, X_star, grams=None, full_cov=False) -> GaussianPredictive:
    """Dispatch on the parameter type."""
    name = basis_name(params)
    if name == "orthogonal":
        return predict_orthogonal(kernel, inducing, params, X_star, grams, full_cov)
    if name == "coupled":
        return predict_coupled(kernel, inducing.beta, params, X_star, grams, full_cov)
    if name == "hybrid":
        return predict_hybrid(kernel, inducing, params, X_star, grams, full_cov)
    return predict_inverse_decoupled(kernel, inducing, params, X_star, grams, full_cov)


def orthogonal_to_hybrid(params: OrthogonalParams, grams: GramCache) -> HybridParams:
    """Same predictive process: m_beta = K_beta a_beta - K_{beta,gamma} a_gamma."""
    m_beta = grams.K_beta @ params.a_beta
    if params.a_gamma.size:
        m_beta = m_beta - grams.K_beta_gamma @ params.a_gamma
    return HybridParams(params.a_gamma.copy(), m_beta, params.L.copy())


def hybrid_to_orthogonal(params: HybridParams, grams: GramCache) -> OrthogonalParams:
    rhs = params.m_beta
    if params.a_gamma.size:
        rhs = rhs + grams.K_beta_gamma @ params.a_gamma
    return OrthogonalParams(params.a_gamma.copy(), grams.solve(rhs), params.L.copy())


def coupled_to_orthogonal(params: CoupledParams, grams: GramCache) -> OrthogonalParams:
    return OrthogonalParams(np.zeros(grams.n_gamma), grams.solve(params.m), params.L.copy())
