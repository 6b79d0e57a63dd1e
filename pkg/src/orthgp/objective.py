"""Negative ELBO  L = KL(q || p) - sum_n E_q[log p(y_n | f(x_n))]  and its gradients.

Gradients are written out by hand for each basis. The data term enters
through the predictive marginals only, so every basis shares the same
backward pass: dL/dmean flows through the (linear) mean features, dL/dvar
through the S-dependent part of the variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bases import (
    CoupledParams,
    HybridParams,
    InducingSets,
    InverseDecoupledParams,
    OrthogonalParams,
    basis_name,
)
from .errors import InputError
from .kernels import (
    GramCache,
    Kernel,
    as_inputs,
    chol_solve,
    cholesky_jitter,
    gram_matrix,
    kernel_diag,
    logdet_from_chol,
    tri_solve,
)

# precompute data/inducing cross-covariances when they fit in this many floats
BLOCK_CACHE_LIMIT = 20_000_000


@dataclass(frozen=True)
class ElboEstimate:
    value: float
    kl: float
    ell_sum: float
    is_stochastic: bool = False
    data_scale: float = 1.0

    @property
    def elbo(self) -> float:
        return -self.value


@dataclass(frozen=True)
class ModelGrads:
    g_a_gamma: np.ndarray
    g_a_beta: np.ndarray
    g_S: np.ndarray
    g_L: np.ndarray


@dataclass(frozen=True)
class DataBlocks:
    K_xb: np.ndarray
    K_xg: np.ndarray
    kdiag: np.ndarray

    def take(self, idx):
        return DataBlocks(self.K_xb[idx], self.K_xg[idx], self.kdiag[idx])


def data_blocks(kernel: Kernel, inducing: InducingSets, X) -> DataBlocks:
    X = as_inputs(X)
    return DataBlocks(
        gram_matrix(kernel, X, inducing.beta),
        gram_matrix(kernel, X, inducing.gamma),
        kernel_diag(kernel, X),
    )


def _xy(dataset):
    if isinstance(dataset, tuple):
        X, y = dataset
    else:
        X, y = dataset.X, dataset.y
    X = as_inputs(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise InputError("X and y lengths differ")
    if X.shape[0] == 0:
        raise InputError("dataset is empty")
    return X, y


# ---------------------------------------------------------------------------
# KL divergence
# ---------------------------------------------------------------------------


def _cov_kl_direct(L, grams: GramCache):
    """tr(S K^{-1}) - log|S| + log|K| - |beta|  for S = L Lᵀ (not halved)."""
    W = tri_solve(grams.L_beta, L)
    return float(np.sum(W**2)) - logdet_from_chol(L) + grams.logdet_K_beta - L.shape[0]


def _cov_kl_inverse(params: InverseDecoupledParams, grams: GramCache):
    # with M = I + L_Bᵀ K L_B:  tr(S K^{-1}) - log|S| + log|K| - |b| = log|M| + tr(M^{-1}) - |b|
    R = params.woodbury_factor(grams.K_beta)
    Rinv = tri_solve(R, np.eye(R.shape[0]))
    return logdet_from_chol(R) + float(np.sum(Rinv**2)) - R.shape[0]


def _quad_gamma(a_gamma, grams: GramCache, cols=None):
    """a_gammaᵀ K_gamma a_gamma and its gradient, optionally column-sampled.

    With a uniform column subset C the estimate (|gamma|/|C|) sum_{j in C}
    a_j (K_gamma a)_j only touches rows C of K_gamma and is unbiased.
    """
    if a_gamma.size == 0:
        return 0.0, np.zeros(0)
    if cols is None:
        Ka = grams.K_gamma @ a_gamma
        return float(a_gamma @ Ka), 2.0 * Ka
    cols = np.asarray(cols, dtype=int)
    if cols.size == 0:
        raise InputError("column sample is empty")
    scale = a_gamma.size / cols.size
    rows = grams.K_gamma[cols]
    r = rows @ a_gamma
    grad = rows.T @ a_gamma[cols]
    grad[cols] += r
    return scale * float(a_gamma[cols] @ r), scale * grad


def _mean_quad(params, grams: GramCache, cols=None):
    """Mean part of 2*KL (the RKHS norm of mu) and its gradient per mean field."""
    name = basis_name(params)
    if name == "coupled":
        Kim = grams.solve(params.m)
        return float(params.m @ Kim), [2.0 * Kim]
    if name == "orthogonal":
        a_g, a_b = params.a_gamma, params.a_beta
        q, g_g = _quad_gamma(a_g, grams, cols)
        Ka = grams.K_beta @ a_b
        q += float(a_b @ Ka)
        if a_g.size:
            pa = grams.proj_gamma @ a_g
            q -= float(pa @ (grams.K_beta_gamma @ a_g))
            g_g = g_g - 2.0 * grams.K_beta_gamma.T @ pa
        return q, [g_g, 2.0 * Ka]
    if name == "hybrid":
        a_g, m_b = params.a_gamma, params.m_beta
        q, g_g = _quad_gamma(a_g, grams, cols)
        Kim = grams.solve(m_b)
        q += float(m_b @ Kim)
        g_m = 2.0 * Kim
        if a_g.size:
            cross = grams.K_beta_gamma @ a_g
            q += 2.0 * float(cross @ Kim)
            g_g = g_g + 2.0 * grams.K_beta_gamma.T @ Kim
            g_m = g_m + 2.0 * grams.solve(cross)
        return q, [g_g, g_m]
    a_g, a_b = params.split(grams.n_gamma)
    q, g_g = _quad_gamma(a_g, grams, cols)
    Ka = grams.K_beta @ a_b
    q += float(a_b @ Ka)
    g_b = 2.0 * Ka
    if a_g.size:
        q += 2.0 * float(a_g @ (grams.K_beta_gamma.T @ a_b))
        g_g = g_g + 2.0 * grams.K_beta_gamma.T @ a_b
        g_b = g_b + 2.0 * grams.K_beta_gamma @ a_g
    return q, [np.concatenate([g_g, g_b])]


def kl_orthogonal(params: OrthogonalParams, grams: GramCache) -> float:
    """KL for the orthogonal basis:
    ½(a_gᵀ K_{g⊥b} a_g + a_bᵀ K_b a_b + tr(S K_b^{-1}) - log|S| + log|K_b| - |b|)."""
    q, _ = _mean_quad(params, grams)
    return 0.5 * (q + _cov_kl_direct(params.L, grams))


def kl_generic(a, S, grams: GramCache) -> float:
    """KL for mu = Psi_alpha a (alpha = gamma then beta) with covariance S over beta."""
    a = np.asarray(a, dtype=float).ravel()
    if a.shape[0] != grams.n_gamma + grams.n_beta:
        raise InputError("a must have |gamma| + |beta| entries")
    L_S, eps = cholesky_jitter(np.asarray(S, dtype=float))
    if eps:
        raise InputError("S must be positive definite")
    q, _ = _mean_quad(InverseDecoupledParams(a, np.zeros_like(L_S)), grams)
    return 0.5 * (q + _cov_kl_direct(L_S, grams))


def kl_divergence(params, grams: GramCache, cols=None) -> float:
    q, _ = _mean_quad(params, grams, cols)
    if isinstance(params, InverseDecoupledParams):
        return 0.5 * (q + _cov_kl_inverse(params, grams))
    return 0.5 * (q + _cov_kl_direct(params.L, grams))


# ---------------------------------------------------------------------------
# Predictive marginals at data and the shared backward pass
# ---------------------------------------------------------------------------


def _marginals(params, grams: GramCache, blocks: DataBlocks):
    """Predictive mean/variance at the block rows, plus what the backward pass reuses."""
    name = basis_name(params)
    K_bx = blocks.K_xb.T
    cache = {}
    if name == "inverse":
        a_g, a_b = params.split(grams.n_gamma)
        mean = blocks.K_xb @ a_b
        if a_g.size:
            mean = mean + blocks.K_xg @ a_g
        R = params.woodbury_factor(grams.K_beta)
        V = chol_solve(R, params.L_B.T @ K_bx)
        var = blocks.kdiag - np.sum((params.L_B.T @ K_bx) * V, axis=0)
        cache.update(R=R, V=V, K_bx=K_bx)
        return mean, np.maximum(var, 0.0), cache

    Vb = tri_solve(grams.L_beta, K_bx)
    P = tri_solve(grams.L_beta, Vb, trans=1)  # K_b^{-1} K_bx
    resid = np.maximum(blocks.kdiag - np.sum(Vb**2, axis=0), 0.0)
    W = params.L.T @ P
    var = resid + np.sum(W**2, axis=0)
    if name == "coupled":
        mean = P.T @ params.m
    elif name == "hybrid":
        mean = P.T @ params.m_beta
        if params.a_gamma.size:
            mean = mean + blocks.K_xg @ params.a_gamma
    else:
        mean = blocks.K_xb @ params.a_beta
        if params.a_gamma.size:
            mean = mean + blocks.K_xg @ params.a_gamma - blocks.K_xb @ (grams.proj_gamma @ params.a_gamma)
    cache.update(P=P)
    return mean, var, cache


def _mean_backward(params, grams, blocks, r):
    """Gradients of sum_n r_n mean_n per mean field."""
    name = basis_name(params)
    if name == "coupled":
        return [grams.solve(blocks.K_xb.T @ r)]
    if name == "hybrid":
        return [blocks.K_xg.T @ r, grams.solve(blocks.K_xb.T @ r)]
    Kb_r = blocks.K_xb.T @ r
    Kg_r = blocks.K_xg.T @ r
    if name == "orthogonal":
        if Kg_r.size:
            Kg_r = Kg_r - grams.proj_gamma.T @ Kb_r
        return [Kg_r, Kb_r]
    return [np.concatenate([Kg_r, Kb_r])]


def _evaluate(params, grams: GramCache, blocks: DataBlocks, y, lik, *, scale=1.0, cols=None,
              need_grad=True):
    """Core: (ElboEstimate, gradient fields in params order, g_S or None)."""
    inverse = isinstance(params, InverseDecoupledParams)
    mean, var, cache = _marginals(params, grams, blocks)
    ell = lik.expected_ll(y, mean, var)
    ell_sum = scale * float(np.sum(ell.value))
    q, g_mean_kl = _mean_quad(params, grams, cols)
    if inverse:
        cov_kl = _cov_kl_inverse(params, grams)
    else:
        cov_kl = _cov_kl_direct(params.L, grams)
    kl = 0.5 * (q + cov_kl)
    est = ElboEstimate(kl - ell_sum, kl, ell_sum, cols is not None or scale != 1.0, scale)
    if not need_grad:
        return est, None, None

    r = -scale * np.asarray(ell.d_mean)   # dL/dmean
    w = -scale * np.asarray(ell.d_var)    # dL/dvar
    grads = [0.5 * g for g in g_mean_kl]
    for i, g in enumerate(_mean_backward(params, grams, blocks, r)):
        grads[i] = grads[i] + g

    if inverse:
        R, V, K_bx = cache["R"], cache["V"], cache["K_bx"]
        L_B, K = params.L_B, grams.K_beta
        # data: dvar/dL_B = -2 (u - K L_B v) vᵀ with v = M^{-1} L_Bᵀ u
        g_LB = -2.0 * ((K_bx - K @ L_B @ V) * w) @ V.T
        # KL: ½ d/dL_B [log|M| + tr(M^{-1})] = K L_B (M^{-1} - M^{-2})
        Minv = chol_solve(R, np.eye(R.shape[0]))
        g_LB = g_LB + K @ L_B @ (Minv - Minv @ Minv)
        grads.append(np.tril(g_LB))
        return est, grads, None

    P, L = cache["P"], params.L
    g_S_data = (P * w) @ P.T
    S_inv = chol_solve(L, np.eye(L.shape[0]))
    g_S = g_S_data + 0.5 * (grams.K_beta_inv - S_inv)
    g_S = 0.5 * (g_S + g_S.T)
    # d/dL of ½(tr(S K^{-1}) - log|S|) = K^{-1} L - L^{-ᵀ}; tril(L^{-ᵀ}) = diag(1/L_ii)
    g_L = np.tril(2.0 * g_S_data @ L + grams.solve(L)) - np.diag(1.0 / np.diag(L))
    grads.append(g_L)
    return est, grads, g_S


# ---------------------------------------------------------------------------
# Public estimators
# ---------------------------------------------------------------------------


def elbo_full(dataset, kernel: Kernel, inducing: InducingSets, params, lik,
              grams: GramCache | None = None) -> ElboEstimate:
    X, y = _xy(dataset)
    grams = inducing.grams(kernel) if grams is None else grams
    est, _, _ = _evaluate(params, grams, data_blocks(kernel, inducing, X), y, lik, need_grad=False)
    return ElboEstimate(est.value, est.kl, est.ell_sum, False, 1.0)


def sample_indices(rng, n, size):
    size = min(int(size), n)
    if size <= 0:
        raise InputError("sample size must be positive")
    return np.sort(rng.choice(n, size=size, replace=False))


def elbo_stochastic(batch_idx, col_idx, dataset, kernel: Kernel, inducing: InducingSets, params, lik,
                    rng=None, batch_size: int = 1024, col_batch: int = 64,
                    grams: GramCache | None = None) -> ElboEstimate:
    """Unbiased estimate of the negative ELBO.

    The likelihood sum over ``batch_idx`` is scaled by N/|batch| and the
    a_gammaᵀ K_gamma a_gamma term is estimated from the columns ``col_idx``.
    Index sets left as None are drawn uniformly without replacement from ``rng``.
    """
    X, y = _xy(dataset)
    grams = inducing.grams(kernel) if grams is None else grams
    rng = np.random.default_rng() if rng is None else rng
    if batch_idx is None:
        batch_idx = sample_indices(rng, X.shape[0], batch_size)
    if col_idx is None and grams.n_gamma and basis_name(params) != "coupled":
        col_idx = sample_indices(rng, grams.n_gamma, col_batch)
    batch_idx = np.asarray(batch_idx, dtype=int)
    if batch_idx.size == 0:
        raise InputError("minibatch is empty")
    blocks = data_blocks(kernel, inducing, X[batch_idx])
    scale = X.shape[0] / batch_idx.size
    est, _, _ = _evaluate(params, grams, blocks, y[batch_idx], lik, scale=scale,
                          cols=col_idx, need_grad=False)
    return ElboEstimate(est.value, est.kl, est.ell_sum, True, scale)


def basis_grads(dataset, kernel: Kernel, inducing: InducingSets, params, lik,
                grams: GramCache | None = None, batch_idx=None, col_idx=None):
    """Gradient of the (possibly stochastic) negative ELBO for any basis.

    Returns (estimate, gradient as an instance of the params' own class, g_S);
    g_S is None for the inverse-decoupled basis.
    """
    X, y = _xy(dataset)
    grams = inducing.grams(kernel) if grams is None else grams
    scale = 1.0
    if batch_idx is not None:
        batch_idx = np.asarray(batch_idx, dtype=int)
        scale = X.shape[0] / batch_idx.size
        X, y = X[batch_idx], y[batch_idx]
    est, grads, g_S = _evaluate(params, grams, data_blocks(kernel, inducing, X), y, lik,
                                scale=scale, cols=col_idx)
    return est, type(params).from_arrays(grads), g_S


def elbo_grads(dataset, kernel: Kernel, inducing: InducingSets, params: OrthogonalParams, lik,
               grams: GramCache | None = None, batch_idx=None, col_idx=None) -> ModelGrads:
    if not isinstance(params, OrthogonalParams):
        raise InputError("elbo_grads takes orthogonal parameters; use basis_grads for other bases")
    _, g, g_S = basis_grads(dataset, kernel, inducing, params, lik, grams, batch_idx, col_idx)
    return ModelGrads(g.a_gamma, g.a_beta, g_S, g.L)


class Objective:
    """A dataset bound to a fixed kernel and inducing sets.

    Caches the data/inducing cross-covariances when they fit in memory so
    repeated full-batch or minibatch evaluations skip kernel assembly.
    """

    def __init__(self, kernel: Kernel, inducing: InducingSets, X, y, lik, grams: GramCache | None = None):
        self.kernel = kernel
        self.inducing = inducing
        self.X, self.y = _xy((X, y))
        self.lik = lik
        self.grams = inducing.grams(kernel) if grams is None else grams
        width = inducing.n_beta + inducing.n_gamma
        self._blocks = None
        if self.X.shape[0] * width <= BLOCK_CACHE_LIMIT:
            self._blocks = data_blocks(kernel, inducing, self.X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def blocks(self, idx=None) -> DataBlocks:
        if self._blocks is not None:
            return self._blocks if idx is None else self._blocks.take(idx)
        X = self.X if idx is None else self.X[idx]
        return data_blocks(self.kernel, self.inducing, X)

    def __call__(self, params, batch_idx=None, col_idx=None, need_grad=True):
        scale = 1.0
        y = self.y
        if batch_idx is not None:
            batch_idx = np.asarray(batch_idx, dtype=int)
            scale = self.n / batch_idx.size
            y = y[batch_idx]
        est, grads, g_S = _evaluate(params, self.grams, self.blocks(batch_idx), y, self.lik,
                                    scale=scale, cols=col_idx, need_grad=need_grad)
        if not need_grad:
            return est
        return est, type(params).from_arrays(grads), g_S

    def value(self, params) -> ElboEstimate:
        return self(params, need_grad=False)
