"""Expected log-likelihoods E_{N(f|m,s)}[log p(y|f)] with derivatives in m and s.

All functions broadcast over arrays of (y, m, s).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import log_ndtr, ndtr

from .errors import InputError

LOG_2PI = np.log(2.0 * np.pi)
S_TINY = 1e-12


@dataclass(frozen=True)
class ExpectedLLResult:
    value: np.ndarray
    d_mean: np.ndarray
    d_var: np.ndarray


@dataclass(frozen=True)
class GaussianLik:
    noise_variance: float = 0.1
    conjugate = True

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise InputError("noise variance must be positive")

    def expected_ll(self, y, m, s) -> ExpectedLLResult:
        return expected_ll_gaussian(y, m, s, self)

    def predictive_log_density(self, y, m, s):
        v = np.asarray(s) + self.noise_variance
        return -0.5 * (LOG_2PI + np.log(v)) - 0.5 * (np.asarray(y) - m) ** 2 / v


@dataclass(frozen=True)
class BernoulliLik:
    """Probit link p(y|f) = Phi(y f), labels in {-1, +1}."""

    quadrature_order: int = 20
    conjugate = False

    def __post_init__(self):
        if self.quadrature_order < 2:
            raise InputError("quadrature order must be at least 2")

    def expected_ll(self, y, m, s) -> ExpectedLLResult:
        return expected_ll_bernoulli(y, m, s, self)

    def predictive_prob(self, m, s):
        """P(y = +1) = Phi(m / sqrt(1 + s))."""
        return ndtr(np.asarray(m) / np.sqrt(1.0 + np.asarray(s)))

    def predictive_log_density(self, y, m, s):
        return log_ndtr(np.asarray(y) * np.asarray(m) / np.sqrt(1.0 + np.asarray(s)))


def expected_ll_gaussian(y, m, s, lik: GaussianLik) -> ExpectedLLResult:
    y, m, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, m, s)))
    if np.any(s < 0):
        raise InputError("predictive variance must be nonnegative")
    sig2 = lik.noise_variance
    r = y - m
    value = -0.5 * (LOG_2PI + np.log(sig2)) - 0.5 * (r**2 + s) / sig2
    return ExpectedLLResult(value, r / sig2, np.full_like(value, -0.5 / sig2))


@lru_cache(maxsize=None)
def gauss_hermite(order: int):
    """Physicists' Gauss-Hermite nodes and weights (weights sum to sqrt(pi)).

    E_{N(m,s)}[g] ~= sum_i w_i g(m + sqrt(2 s) t_i) / sqrt(pi).
    """
    if order < 1:
        raise InputError("quadrature order must be positive")
    t, w = hermgauss(order)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def _mills(z):
    # phi(z) / Phi(z), stable for very negative z
    return np.exp(-0.5 * z**2 - 0.5 * LOG_2PI - log_ndtr(z))


def check_labels(y):
    y = np.asarray(y, dtype=float)
    if not np.all((y == 1.0) | (y == -1.0)):
        raise InputError("Bernoulli labels must be -1 or +1")
    return y


def expected_ll_bernoulli(y, m, s, lik: BernoulliLik) -> ExpectedLLResult:
    """Gauss-Hermite quadrature of log Phi(y f).

    Both derivatives are those of the quadrature sum itself, so they agree
    with finite differences of ``value`` to rounding error:
    d/dm = sum w g'(f),  d/ds = sum w g'(f) t / sqrt(2 s).
    As s -> 0 the latter tends to g''(m)/2, which is used below S_TINY.
    """
    y = check_labels(y)
    y, m, s = np.broadcast_arrays(y, *(np.asarray(v, dtype=float) for v in (m, s)))
    if np.any(s < 0):
        raise InputError("predictive variance must be nonnegative")
    t, w = gauss_hermite(lik.quadrature_order)
    w = w / np.sqrt(np.pi)
    root = np.sqrt(2.0 * s)[..., None]
    f = m[..., None] + root * t
    z = y[..., None] * f
    lam = _mills(z)
    g1 = y[..., None] * lam
    value = log_ndtr(z) @ w
    d_mean = g1 @ w
    tiny = s < S_TINY
    safe = np.where(tiny[..., None], 1.0, root)
    d_var = (g1 * t / safe) @ w
    if np.any(tiny):
        z0 = y * m
        lam0 = _mills(z0)
        d_var = np.where(tiny, -0.5 * lam0 * (z0 + lam0), d_var)
    return ExpectedLLResult(value, d_mean, d_var)
