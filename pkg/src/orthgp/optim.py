"""Natural-gradient and adaptive updates for the variational parameters.

Coordinates for the orthogonal basis (model, natural, expectation):

    model        (a_g, a_b, S = L Lᵀ)
    natural      j_g = a_g,            j_b = S^{-1} K_b a_b,   Theta = S^{-1} / 2
    expectation  m_g⊥b = K_g⊥b j_g,    m_b = S j_b,            Lambda = -S - m_b m_bᵀ

A natural-gradient step moves the natural parameters against the gradient
taken with respect to the expectation parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .bases import CoupledParams, HybridParams, OrthogonalParams
from .errors import InputError, OptimizationError, check_gate
from .kernels import GramCache, chol_solve, cholesky_jitter, tri_solve

log = logging.getLogger(__name__)

MAX_HALVINGS = 20
EXACT_GAMMA_GATE = 512


@dataclass(frozen=True)
class NaturalParams:
    j_gamma: np.ndarray
    j_beta: np.ndarray
    Theta: np.ndarray


@dataclass(frozen=True)
class ExpectationParams:
    m_gamma_perp: np.ndarray
    m_beta: np.ndarray
    Lambda: np.ndarray


@dataclass(frozen=True)
class StepConfig:
    tau_nat: float = 0.005
    adam_lr: float = 0.001
    ramp_iters: int = 100
    ramp_start: float = 1e-5
    epsilon_jitter: float = 1e-3
    gamma_rule: str = "adam"  # "adam" or "nystrom"

    def __post_init__(self):
        if not (self.tau_nat > 0 and self.adam_lr > 0 and self.epsilon_jitter > 0 and self.ramp_start > 0):
            raise InputError("step sizes and jitter must be positive")
        if self.ramp_iters < 0:
            raise InputError("ramp_iters must be nonnegative")
        if self.gamma_rule not in ("adam", "nystrom"):
            raise InputError(f"unknown gamma update rule {self.gamma_rule!r}")


def _strict_chol(A):
    try:
        return linalg.cholesky(0.5 * (A + A.T), lower=True)
    except linalg.LinAlgError as exc:
        raise OptimizationError("matrix lost positive definiteness") from exc


def _inv_from_chol(L):
    return chol_solve(L, np.eye(L.shape[0]))


# ---------------------------------------------------------------------------
# Parameter maps
# ---------------------------------------------------------------------------


def model_to_natural(params: OrthogonalParams, grams: GramCache) -> NaturalParams:
    S_inv = _inv_from_chol(params.L)
    j_beta = chol_solve(params.L, grams.K_beta @ params.a_beta)
    Theta = 0.25 * (S_inv + S_inv.T)
    return NaturalParams(params.a_gamma.copy(), j_beta, Theta)


def natural_to_model(nat: NaturalParams, grams: GramCache) -> OrthogonalParams:
    """Inverse of model_to_natural. Raises OptimizationError when Theta is not PD."""
    L_theta = _strict_chol(nat.Theta)
    S = 0.5 * _inv_from_chol(L_theta)
    L = _strict_chol(S)
    a_beta = grams.solve(S @ nat.j_beta)
    return OrthogonalParams(nat.j_gamma.copy(), a_beta, L)


def model_to_expectation(params: OrthogonalParams, grams: GramCache) -> ExpectationParams:
    m_gamma_perp = grams.K_gamma_perp @ params.a_gamma if params.a_gamma.size else np.zeros(0)
    m_beta = grams.K_beta @ params.a_beta
    S = params.S
    return ExpectationParams(m_gamma_perp, m_beta, -S - np.outer(m_beta, m_beta))


def natural_to_expectation(nat: NaturalParams, grams: GramCache) -> ExpectationParams:
    """The Figure-style direct map: S = Theta^{-1}/2, m_b = S j_b."""
    S = 0.5 * _inv_from_chol(_strict_chol(nat.Theta))
    m_beta = S @ nat.j_beta
    m_gp = grams.K_gamma_perp @ nat.j_gamma if nat.j_gamma.size else np.zeros(0)
    return ExpectationParams(m_gp, m_beta, -S - np.outer(m_beta, m_beta))


# ---------------------------------------------------------------------------
# Natural-gradient steps
# ---------------------------------------------------------------------------


def natural_step_beta(nat: NaturalParams, grads, expect: ExpectationParams, grams: GramCache,
                      tau: float, max_halvings: int = MAX_HALVINGS) -> NaturalParams:
    """j_b <- j_b - tau (K_b^{-1} g_ab - 2 g_S m_b),  Theta <- Theta + tau g_S.

    A step that leaves Theta (or the implied S) indefinite is retried with
    half the step size, up to ``max_halvings`` times.
    """
    if tau <= 0:
        raise InputError("step size must be positive")
    g_S = 0.5 * (grads.g_S + grads.g_S.T)
    d_j = grams.solve(grads.g_a_beta) - 2.0 * g_S @ expect.m_beta
    for _ in range(max_halvings + 1):
        Theta = nat.Theta + tau * g_S
        Theta = 0.5 * (Theta + Theta.T)
        try:
            _strict_chol(0.5 * _inv_from_chol(_strict_chol(Theta)))
        except OptimizationError:
            log.debug("natural step rejected at tau=%.3e; halving", tau)
            tau *= 0.5
            continue
        return NaturalParams(nat.j_gamma, nat.j_beta - tau * d_j, Theta)
    raise OptimizationError(f"positive definiteness not recovered after {max_halvings} halvings")


def nystrom_diag(grams: GramCache) -> np.ndarray:
    """diag(K_g - K_gb K_b^{-1} K_bg), clamped at 0."""
    return grams.K_gamma_perp_diag.copy()


def natural_step_gamma(j_gamma, grad_a_gamma, diag, tau: float, epsilon: float):
    """j_g <- j_g - tau (D + eps I)^{-1} g_ag."""
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    return np.asarray(j_gamma) - tau * np.asarray(grad_a_gamma) / (np.asarray(diag) + epsilon)


def exact_step_gamma(j_gamma, grad_a_gamma, grams: GramCache, tau: float):
    """j_g <- j_g - tau K_g⊥b^{-1} g_ag via a dense solve (small |gamma| only)."""
    check_gate(grams.n_gamma, EXACT_GAMMA_GATE, "exact gamma natural step")
    if grams.n_gamma == 0:
        return np.asarray(j_gamma).copy()
    Lp, _ = cholesky_jitter(grams.K_gamma_perp)
    return np.asarray(j_gamma) - tau * chol_solve(Lp, grad_a_gamma)


def coupled_natural_step(params: CoupledParams, g_m, g_S, tau: float,
                         max_halvings: int = MAX_HALVINGS) -> CoupledParams:
    """Standard coupled-basis step in (theta1, theta2) = (S^{-1} m, -S^{-1}/2),
    with expectation parameters (m, S + m mᵀ)."""
    g_S = 0.5 * (g_S + g_S.T)
    S_inv = _inv_from_chol(params.L)
    theta1 = S_inv @ params.m
    theta2 = -0.5 * S_inv
    d1 = g_m - 2.0 * g_S @ params.m
    for _ in range(max_halvings + 1):
        t2 = theta2 - tau * g_S
        try:
            neg = _strict_chol(-2.0 * t2)
            S = _inv_from_chol(neg)
            L = _strict_chol(S)
        except OptimizationError:
            tau *= 0.5
            continue
        return CoupledParams(S @ (theta1 - tau * d1), L)
    raise OptimizationError(f"positive definiteness not recovered after {max_halvings} halvings")


def hybrid_natural_step(params: HybridParams, grads: HybridParams, g_S, grams: GramCache,
                        tau: float) -> HybridParams:
    """One exact natural step taken in the hybrid basis' own natural coordinates.

    With mu = Psi_g a_g + Psi_b K_b^{-1} m_b the pair
        j'_g = a_g,   j'_b = S^{-1} mu(beta) - K_b^{-1} K_bg a_g,   Theta = S^{-1}/2
    is natural, with expectation parameters (mu(gamma), mu(beta), Lambda).
    Gradients with respect to those come from the hybrid gradients by the chain rule.
    """
    check_gate(grams.n_gamma, EXACT_GAMMA_GATE, "exact hybrid natural step")
    K_bg = grams.K_beta_gamma
    a_g, m_h = params.a_gamma, params.m_beta
    g_a, g_m = grads.a_gamma, grads.m_beta
    g_S = 0.5 * (g_S + g_S.T)
    S = params.S
    mu_beta = m_h + K_bg @ a_g

    Lp, _ = cholesky_jitter(grams.K_gamma_perp)
    v = chol_solve(Lp, g_a - K_bg.T @ g_m)           # dL / d mu(gamma)
    d_mu_beta = g_m - grams.solve(K_bg @ v) - 2.0 * g_S @ mu_beta

    j_g = a_g - tau * v
    j_b = chol_solve(params.L, mu_beta) - grams.solve(K_bg @ a_g) - tau * d_mu_beta
    Theta = 0.5 * _inv_from_chol(params.L) + tau * g_S

    S_new = 0.5 * _inv_from_chol(_strict_chol(Theta))
    mu_beta_new = S_new @ (j_b + grams.solve(K_bg @ j_g))
    return HybridParams(j_g, mu_beta_new - K_bg @ j_g, _strict_chol(S_new))


# ---------------------------------------------------------------------------
# Adaptive moments and step schedule
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def like(cls, arrays):
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(state: AdamState, grads, lr: float = 0.001, b1: float = 0.9, b2: float = 0.999,
              eps: float = 1e-8):
    """Bias-corrected adaptive-moment update.

    Returns (new_state, deltas); add the deltas to the parameters.
    """
    grads = [np.asarray(g, dtype=float) for g in grads]
    if not state.m:
        state = AdamState.like(grads)
    if len(grads) != len(state.m) or any(g.shape != m.shape for g, m in zip(grads, state.m)):
        raise InputError("gradient shapes do not match the optimizer state")
    t = state.t + 1
    ms, vs, deltas = [], [], []
    for g, m, v in zip(grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        ms.append(m)
        vs.append(v)
        deltas.append(-lr * m_hat / (np.sqrt(v_hat) + eps))
    return AdamState(ms, vs, t), deltas


def step_size_schedule(iteration: int, config: StepConfig, conjugate: bool) -> float:
    """Constant for conjugate likelihoods; otherwise a linear ramp from
    ``ramp_start`` to ``tau_nat`` over the first ``ramp_iters`` iterations."""
    if iteration < 0:
        raise InputError("iteration must be nonnegative")
    if conjugate or config.ramp_iters == 0:
        return config.tau_nat
    frac = min(iteration / config.ramp_iters, 1.0)
    return config.ramp_start + frac * (config.tau_nat - config.ramp_start)
