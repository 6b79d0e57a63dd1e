"""Orthogonally decoupled sparse variational Gaussian processes."""

from .bases import (
    CoupledParams,
    GaussianPredictive,
    HybridParams,
    InducingSets,
    InverseDecoupledParams,
    OrthogonalParams,
    predict,
    predict_coupled,
    predict_hybrid,
    predict_inverse_decoupled,
    predict_orthogonal,
)
from .data import Dataset, generate_synthetic, load_csv, train_test_split
from .errors import CapabilityError, InputError, NumericalError, OptimizationError, OrthGPError
from .harness import RunConfig, TraceRecord, evaluate, init_inducing, init_variational, kmeans_init, train
from .kernels import Kernel, build_grams, cholesky_jitter, gram_matrix, kernel_eval
from .likelihoods import BernoulliLik, GaussianLik
from .objective import Objective, basis_grads, elbo_full, elbo_grads, elbo_stochastic, kl_divergence
from .oracles import (
    exact_gp_regression,
    optimal_orthogonal_params,
    optimal_variational_gaussian,
    two_set_conditioning_posterior,
)
from .optim import StepConfig

__version__ = "0.1.0"
