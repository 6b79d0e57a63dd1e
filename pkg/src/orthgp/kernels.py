"""Sum-of-kernels covariance (RBF + Matern52), Gram assembly and jittered Cholesky."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .errors import InputError, NumericalError

log = logging.getLogger(__name__)

SQRT5 = np.sqrt(5.0)
MAX_ESCALATIONS = 8
RELATIVE_JITTER = 1e-6


@dataclass(frozen=True)
class Kernel:
    """k(x, x') = RBF(x, x') + Matern52(x, x') with isotropic lengthscales."""

    rbf_amplitude: float = 1.0
    rbf_lengthscale: float = 1.0
    matern52_amplitude: float = 1.0
    matern52_lengthscale: float = 0.1

    def __post_init__(self):
        for name in ("rbf_amplitude", "rbf_lengthscale",
                     "matern52_amplitude", "matern52_lengthscale"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InputError(f"kernel {name} must be positive, got {value}")

    @classmethod
    def default(cls, input_dim: int, classification: bool = False) -> "Kernel":
        """Defaults for standardized inputs: Matern52 lengthscale 0.1*sqrt(d),
        RBF lengthscale sqrt(d), amplitude 1 (regression) or 5 (classification)."""
        amp = 5.0 if classification else 1.0
        root_d = np.sqrt(input_dim)
        return cls(amp, root_d, amp, 0.1 * root_d)

    @property
    def variance(self) -> float:
        return self.rbf_amplitude + self.matern52_amplitude

    def from_sqdist(self, d2: np.ndarray) -> np.ndarray:
        d2 = np.maximum(d2, 0.0)
        rbf = self.rbf_amplitude * np.exp(-0.5 * d2 / self.rbf_lengthscale**2)
        r = np.sqrt(d2) / self.matern52_lengthscale
        matern = self.matern52_amplitude * (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * np.exp(-SQRT5 * r)
        return rbf + matern

    def rbf(self, r):
        return self.rbf_amplitude * np.exp(-0.5 * (np.asarray(r) / self.rbf_lengthscale) ** 2)

    def matern52(self, r):
        r = np.asarray(r) / self.matern52_lengthscale
        return self.matern52_amplitude * (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * np.exp(-SQRT5 * r)


def as_inputs(X) -> np.ndarray:
    """Coerce to an (n, d) float array; 1-D input is read as n scalar points."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"inputs must be 1-D or 2-D, got shape {X.shape}")
    return X


def kernel_eval(kernel: Kernel, x, x_prime) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape or x.ndim != 1:
        raise InputError(f"point dimension mismatch: {x.shape} vs {x_prime.shape}")
    d2 = float(np.sum((x - x_prime) ** 2))
    return float(kernel.from_sqdist(np.array(d2)))


def gram_matrix(kernel: Kernel, X1, X2=None) -> np.ndarray:
    X1 = as_inputs(X1)
    X2 = X1 if X2 is None else as_inputs(X2)
    if X1.shape[1] != X2.shape[1]:
        raise InputError(f"input dimension mismatch: {X1.shape[1]} vs {X2.shape[1]}")
    if X1.shape[0] == 0 or X2.shape[0] == 0:
        return np.zeros((X1.shape[0], X2.shape[0]))
    return kernel.from_sqdist(cdist(X1, X2, "sqeuclidean"))


def kernel_diag(kernel: Kernel, X) -> np.ndarray:
    return np.full(as_inputs(X).shape[0], kernel.variance)


def cholesky_jitter(A, jitter_start: float = 0.0):
    """Lower Cholesky factor of A + eps*I for the smallest eps that works.

    The first attempt uses ``jitter_start``; each failure multiplies eps by 10
    (starting from 1e-6 times the mean diagonal when ``jitter_start`` is 0),
    at most 8 times.

    Returns
    -------
    L : (n, n) lower-triangular array
    jitter : the eps that was added
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"cholesky needs a square matrix, got {A.shape}")
    if jitter_start < 0:
        raise InputError("jitter_start must be nonnegative")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    eps = float(jitter_start)
    scale = float(np.mean(np.abs(np.diag(A)))) or 1.0
    for attempt in range(MAX_ESCALATIONS + 1):
        try:
            L = linalg.cholesky(A + eps * np.eye(n), lower=True, check_finite=True)
            if attempt:
                log.debug("cholesky succeeded with jitter %.3e", eps)
            return L, eps
        except (linalg.LinAlgError, ValueError):
            if attempt == MAX_ESCALATIONS:
                break
            eps = 10.0 * eps if eps > 0 else RELATIVE_JITTER * scale
    raise NumericalError(f"matrix not positive definite even with jitter {eps:.3e}", jitter=eps)


def chol_solve(L, B):
    return linalg.cho_solve((L, True), B, check_finite=False)


def tri_solve(L, B, trans=0):
    return linalg.solve_triangular(L, B, lower=True, trans=trans, check_finite=False)


def logdet_from_chol(L) -> float:
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(L)))))


@dataclass(frozen=True)
class GramCache:
    """Inducing-point Gram blocks shared by every basis.

    ``K_gamma`` (full) is kept because the KL needs a_gammaᵀ K_gamma a_gamma;
    everything derived from ``L_beta`` is computed lazily and cached.
    """

    K_beta: np.ndarray
    L_beta: np.ndarray
    K_beta_gamma: np.ndarray
    K_gamma: np.ndarray
    K_gamma_diag: np.ndarray
    jitter: float = 0.0

    @property
    def n_beta(self) -> int:
        return self.K_beta.shape[0]

    @property
    def n_gamma(self) -> int:
        return self.K_gamma_diag.shape[0]

    def solve(self, B):
        """K_beta^{-1} B through the cached factor."""
        return chol_solve(self.L_beta, B)

    @cached_property
    def logdet_K_beta(self) -> float:
        return logdet_from_chol(self.L_beta)

    @cached_property
    def proj_gamma(self) -> np.ndarray:
        """K_beta^{-1} K_{beta,gamma}."""
        return self.solve(self.K_beta_gamma)

    @cached_property
    def K_gamma_perp(self) -> np.ndarray:
        """Schur complement K_gamma - K_{gamma,beta} K_beta^{-1} K_{beta,gamma}."""
        Kp = self.K_gamma - self.K_beta_gamma.T @ self.proj_gamma
        return 0.5 * (Kp + Kp.T)

    @cached_property
    def K_gamma_perp_diag(self) -> np.ndarray:
        V = tri_solve(self.L_beta, self.K_beta_gamma)
        return np.maximum(self.K_gamma_diag - np.sum(V**2, axis=0), 0.0)

    @cached_property
    def K_beta_inv(self) -> np.ndarray:
        # only for small dense oracles and natural-gradient bookkeeping
        return self.solve(np.eye(self.n_beta))


def build_grams(kernel: Kernel, beta, gamma=None, jitter_start: float = 0.0) -> GramCache:
    beta = as_inputs(beta)
    gamma = np.zeros((0, beta.shape[1])) if gamma is None else as_inputs(gamma)
    K_beta = gram_matrix(kernel, beta)
    K_beta = 0.5 * (K_beta + K_beta.T)
    L_beta, eps = cholesky_jitter(K_beta, jitter_start)
    if eps:
        # downstream formulas must see the matrix that was actually factorized
        K_beta = K_beta + eps * np.eye(K_beta.shape[0])
    return GramCache(
        K_beta=K_beta,
        L_beta=L_beta,
        K_beta_gamma=gram_matrix(kernel, beta, gamma),
        K_gamma=gram_matrix(kernel, gamma),
        K_gamma_diag=kernel_diag(kernel, gamma),
        jitter=eps,
    )
