"""Inducing-point initialization, the training loop, metrics and run tracing."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .bases import (
    CoupledParams,
    HybridParams,
    InducingSets,
    InverseDecoupledParams,
    OrthogonalParams,
    predict,
)
from .data import Dataset
from .errors import InputError, OptimizationError
from .kernels import GramCache, Kernel
from .likelihoods import BernoulliLik, GaussianLik
from .objective import ModelGrads, Objective, sample_indices
from .optim import (
    AdamState,
    StepConfig,
    adam_step,
    coupled_natural_step,
    exact_step_gamma,
    model_to_expectation,
    model_to_natural,
    natural_step_beta,
    natural_step_gamma,
    natural_to_model,
    nystrom_diag,
    step_size_schedule,
)

log = logging.getLogger(__name__)

OPTIMIZERS = ("adaptive", "natural", "natural-approx")
BASIS_ALIASES = {"inverse-decoupled": "inverse"}
INVERSE_INIT_B = 1e-8


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def kmeans_init(X, k: int, seed: int = 0, iters: int = 50) -> np.ndarray:
    """Lloyd's algorithm from k distinct random rows.

    An empty cluster is re-seeded at the point farthest from its current center.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"kmeans needs 1 <= k <= N, got k={k}, N={n}")
    rng = np.random.default_rng(seed)
    centers = X[np.sort(rng.choice(n, size=k, replace=False))].copy()
    for _ in range(iters):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
        labels = np.argmin(d2, axis=1)
        closest = d2[np.arange(n), labels]
        new = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
            else:
                far = int(np.argmax(closest))
                new[j] = X[far]
                closest[far] = 0.0
        if np.array_equal(new, centers):
            break
        centers = new
    return centers


def init_inducing(dataset: Dataset, n_beta: int, n_gamma: int, seed: int = 0) -> InducingSets:
    """beta from k-means, gamma a uniform sample of training rows not equal to any beta point."""
    if n_gamma < 0:
        raise InputError("n_gamma must be nonnegative")
    X = dataset.X
    beta = kmeans_init(X, n_beta, seed)
    # a center that lands exactly on a row would clash with gamma; drop such rows
    clash = (X[:, None, :] == beta[None, :, :]).all(-1).any(axis=1)
    pool = np.flatnonzero(~clash)
    if n_gamma == 0:
        return InducingSets(beta, np.zeros((0, X.shape[1])))
    _, first = np.unique(X[pool], axis=0, return_index=True)
    pool = pool[np.sort(first)]
    rng = np.random.default_rng([seed, 1])
    take = np.sort(rng.choice(pool.size, size=min(n_gamma, pool.size), replace=False))
    return InducingSets(beta, X[pool[take]])


def init_variational(basis: str, grams: GramCache):
    """Prior initialization: zero means, S = K_beta (B ~ 0 for the inverse basis)."""
    basis = BASIS_ALIASES.get(basis, basis)
    n_b, n_g = grams.n_beta, grams.n_gamma
    L = grams.L_beta.copy()
    if basis == "orthogonal":
        return OrthogonalParams(np.zeros(n_g), np.zeros(n_b), L)
    if basis == "coupled":
        return CoupledParams(np.zeros(n_b), L)
    if basis == "hybrid":
        return HybridParams(np.zeros(n_g), np.zeros(n_b), L)
    if basis == "inverse":
        return InverseDecoupledParams(np.zeros(n_g + n_b), np.sqrt(INVERSE_INIT_B) * np.eye(n_b))
    raise InputError(f"unknown basis {basis!r}")


# ---------------------------------------------------------------------------
# Configuration and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    basis: str = "orthogonal"
    optimizer: str = "natural-approx"
    n_beta: int = 16
    n_gamma: int = 64
    iterations: int = 20000
    batch_size: int = 1024
    column_batch: int = 64
    seed: int = 0
    step: StepConfig = field(default_factory=StepConfig)
    noise_variance: float = 0.1
    quadrature_order: int = 20
    eval_every: int = 100

    def __post_init__(self):
        object.__setattr__(self, "basis", BASIS_ALIASES.get(self.basis, self.basis))
        if self.basis not in ("coupled", "orthogonal", "hybrid", "inverse"):
            raise InputError(f"unknown basis {self.basis!r}")
        if self.optimizer not in OPTIMIZERS:
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer != "adaptive" and self.basis not in ("coupled", "orthogonal"):
            raise InputError(f"optimizer {self.optimizer!r} needs the coupled or orthogonal basis")
        if self.n_beta < 1:
            raise InputError("n_beta must be at least 1")
        if self.n_gamma < 0 or self.iterations < 0:
            raise InputError("n_gamma and iterations must be nonnegative")
        if self.batch_size < 1 or self.column_batch < 1 or self.eval_every < 1:
            raise InputError("batch sizes and eval_every must be positive")

    @property
    def uses_gamma(self) -> bool:
        return self.basis != "coupled" and self.n_gamma > 0


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    elbo: float
    wall_ms: int
    rmse: float | None = None
    mae: float | None = None
    test_ll: float | None = None
    acc: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: object
    inducing: InducingSets
    kernel: Kernel
    likelihood: object
    trace: list
    elbo_history: list
    status: str = "ok"
    error: str | None = None
    grams: GramCache | None = None

    @property
    def final_elbo(self) -> float:
        return self.elbo_history[-1]


def make_likelihood(config: RunConfig, dataset: Dataset):
    if dataset.is_classification:
        return BernoulliLik(config.quadrature_order)
    return GaussianLik(config.noise_variance)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def evaluate(params, kernel: Kernel, inducing: InducingSets, test: Dataset, lik,
             grams: GramCache | None = None) -> dict:
    """Test metrics on the standardized scale.

    Regression gives rmse, mae and mean predictive log density; classification
    gives accuracy (probability thresholded at 0.5) and mean log likelihood.
    """
    pred = predict(kernel, inducing, params, test.X, grams)
    out = {"rmse": None, "mae": None, "test_ll": None, "acc": None}
    if isinstance(lik, BernoulliLik):
        prob = lik.predictive_prob(pred.mean, pred.variance)
        out["acc"] = float(np.mean(np.where(prob >= 0.5, 1.0, -1.0) == test.y))
        out["test_ll"] = float(np.mean(lik.predictive_log_density(test.y, pred.mean, pred.variance)))
    else:
        r = test.y - pred.mean
        out["rmse"] = float(np.sqrt(np.mean(r**2)))
        out["mae"] = float(np.mean(np.abs(r)))
        out["test_ll"] = float(np.mean(lik.predictive_log_density(test.y, pred.mean, pred.variance)))
    return out


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class _Stepper:
    """One optimizer step for a given basis/optimizer pair."""

    def __init__(self, config: RunConfig, grams: GramCache, conjugate: bool):
        self.config = config
        self.grams = grams
        self.conjugate = conjugate
        self.adam = AdamState()
        self.diag = nystrom_diag(grams) if grams.n_gamma else None

    def __call__(self, it, params, grads, g_S):
        cfg = self.config
        if cfg.optimizer == "adaptive":
            self.adam, deltas = adam_step(self.adam, grads.arrays(), cfg.step.adam_lr)
            return type(params).from_arrays([p + d for p, d in zip(params.arrays(), deltas)])
        tau = step_size_schedule(it, cfg.step, self.conjugate)
        if isinstance(params, CoupledParams):
            return coupled_natural_step(params, grads.m, g_S, tau)
        g = self.grams
        nat = model_to_natural(params, g)
        mg = ModelGrads(grads.a_gamma, grads.a_beta, g_S, grads.L)
        nat = natural_step_beta(nat, mg, model_to_expectation(params, g), g, tau)
        j_gamma = nat.j_gamma
        if g.n_gamma:
            if cfg.optimizer == "natural":
                j_gamma = exact_step_gamma(j_gamma, grads.a_gamma, g, tau)
            elif cfg.step.gamma_rule == "nystrom":
                j_gamma = natural_step_gamma(j_gamma, grads.a_gamma, self.diag, tau, cfg.step.epsilon_jitter)
            else:
                self.adam, deltas = adam_step(self.adam, [grads.a_gamma], cfg.step.adam_lr)
                j_gamma = j_gamma + deltas[0]
        new = natural_to_model(type(nat)(j_gamma, nat.j_beta, nat.Theta), g)
        if not all(np.all(np.isfinite(a)) for a in new.arrays()):
            raise OptimizationError(f"non-finite parameters at iteration {it}")
        return new


def train(config: RunConfig, dataset: Dataset, test: Dataset | None = None, *,
          inducing: InducingSets | None = None, kernel: Kernel | None = None,
          clock=time.perf_counter) -> TrainResult:
    """Optimize the variational parameters with inducing points and kernel fixed.

    A trace record is emitted at iteration 0, every ``eval_every`` iterations
    and at the end. ``elbo_history[t]`` is the ELBO estimate after t steps
    (the last entry is always a full-data evaluation). The run is deterministic given the seed
    apart from ``wall_ms``, which comes from ``clock``.
    """
    t0 = clock()
    kernel = Kernel.default(dataset.input_dim, dataset.is_classification) if kernel is None else kernel
    if inducing is None:
        inducing = init_inducing(dataset, config.n_beta, config.n_gamma if config.uses_gamma else 0,
                                 config.seed)
    elif config.basis == "coupled" and inducing.n_gamma:
        inducing = InducingSets(inducing.beta, None)
    lik = make_likelihood(config, dataset)
    obj = Objective(kernel, inducing, dataset.X, dataset.y, lik)
    grams = obj.grams
    params = init_variational(config.basis, grams)
    stepper = _Stepper(config, grams, lik.conjugate)
    rng = np.random.default_rng(config.seed)
    n = dataset.n
    full_batch = config.batch_size >= n
    full_cols = grams.n_gamma <= config.column_batch or config.basis == "coupled"

    trace, history = [], []

    def record(it, elbo):
        metrics = {}
        if test is not None:
            metrics = evaluate(params, kernel, inducing, test, lik, grams)
        wall = int(round(1000 * (clock() - t0)))
        trace.append(TraceRecord(it, float(elbo), wall, **metrics))

    status, error = "ok", None
    done, previous = 0, params
    for it in range(config.iterations):
        batch = None if full_batch else sample_indices(rng, n, config.batch_size)
        cols = None if full_cols else sample_indices(rng, grams.n_gamma, config.column_batch)
        with np.errstate(over="ignore", invalid="ignore"):
            est, grads, g_S = obj(params, batch, cols)
        if not (np.isfinite(est.value) and all(np.all(np.isfinite(g)) for g in grads.arrays())):
            # the last step diverged: fall back to the snapshot before it
            log.warning("aborting at iteration %d: non-finite objective", it)
            status, error = "aborted", f"non-finite objective at iteration {it}"
            if done:
                params, done = previous, done - 1
                history.pop()
            break
        history.append(est.elbo)
        if it % config.eval_every == 0:
            record(it, est.elbo)
        try:
            params, previous = stepper(it, params, grads, g_S), params
        except OptimizationError as exc:
            log.warning("aborting at iteration %d: %s", it, exc)
            status, error = "aborted", str(exc)
            history.pop()
            break
        done += 1
    final = obj.value(params).elbo
    history.append(final)
    if not trace or trace[-1].iter != done:
        record(done, final)
    return TrainResult(params, inducing, kernel, lik, trace, history, status, error, grams)
