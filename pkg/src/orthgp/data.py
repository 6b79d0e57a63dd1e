"""Datasets: CSV ingestion, standardization, splits and synthetic generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InputError, check_gate
from .kernels import Kernel, cholesky_jitter, gram_matrix

REGRESSION = "regression"
CLASSIFICATION = "binary-classification"
TASKS = (REGRESSION, CLASSIFICATION)
SYNTHETIC_GATE = 4096
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Standardized inputs/targets plus the statistics needed to undo it."""

    X: np.ndarray
    y: np.ndarray
    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0
    task: str = REGRESSION

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.task == CLASSIFICATION

    def raw_X(self) -> np.ndarray:
        return self.X * self.feature_stds + self.feature_means

    def raw_y(self) -> np.ndarray:
        return self.destandardize_targets(self.y)

    def destandardize_targets(self, values) -> np.ndarray:
        return np.asarray(values) * self.target_std + self.target_mean

    def subset(self, idx) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx])


def normalize_task(task: str) -> str:
    if task in ("classification", "binary", CLASSIFICATION):
        return CLASSIFICATION
    if task == REGRESSION:
        return REGRESSION
    raise InputError(f"unknown task {task!r}")


def map_labels(y) -> np.ndarray:
    """Map {0,1} or {-1,+1} labels to {-1,+1}."""
    y = np.asarray(y, dtype=float)
    values = set(np.unique(y).tolist())
    if values <= {-1.0, 1.0}:
        return y.copy()
    if values <= {0.0, 1.0}:
        return 2.0 * y - 1.0
    raise InputError(f"classification labels must be binary, found {sorted(values)[:5]}")


def standardize(X_raw, y_raw, task: str, stats_from=None) -> Dataset:
    """Standardize columns with statistics from ``stats_from`` rows (default: all).

    Columns whose std is below 1e-12 are only centered (std 1 is substituted).
    """
    X_raw = np.asarray(X_raw, dtype=float)
    y_raw = np.asarray(y_raw, dtype=float).ravel()
    task = normalize_task(task)
    ref = slice(None) if stats_from is None else stats_from
    mu = X_raw[ref].mean(axis=0)
    sd = X_raw[ref].std(axis=0)
    sd = np.where(sd < STD_FLOOR, 1.0, sd)
    if task == CLASSIFICATION:
        y = map_labels(y_raw)
        t_mean, t_std = 0.0, 1.0
    else:
        t_mean = float(y_raw[ref].mean())
        t_std = float(y_raw[ref].std())
        t_std = 1.0 if t_std < STD_FLOOR else t_std
        y = (y_raw - t_mean) / t_std
    return Dataset((X_raw - mu) / sd, y, mu, sd, t_mean, t_std, task)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path, task: str = REGRESSION) -> Dataset:
    """Numeric CSV, optional header row, last column is the target."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise InputError(f"{path}: empty file")
    start = 0
    if not all(_is_number(cell) for cell in rows[0]):
        start = 1
    width = len(rows[start]) if start < len(rows) else 0
    if width < 2:
        raise InputError(f"{path}: need at least one feature column and a target column")
    data = np.empty((len(rows) - start, width))
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise InputError(f"{path}: row {i} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row, start=1):
            try:
                data[i - start - 1, j - 1] = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {i}, column {j}: cannot parse {cell!r}") from None
    if data.shape[0] == 0:
        raise InputError(f"{path}: no data rows")
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite values")
    return standardize(data[:, :-1], data[:, -1], task)


def train_test_split(dataset: Dataset, fraction: float = 0.1, seed: int = 0):
    """Random split; both halves are re-standardized with training statistics."""
    if not 0.0 < fraction < 1.0:
        raise InputError("test fraction must lie in (0, 1)")
    n = dataset.n
    n_test = int(round(fraction * n))
    if n_test == 0 or n_test == n:
        raise InputError(f"a test fraction of {fraction} leaves an empty split for N={n}")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    X_raw = dataset.raw_X()
    y_raw = dataset.raw_y() if not dataset.is_classification else dataset.y
    full = standardize(X_raw, y_raw, dataset.task, stats_from=train_idx)
    return full.subset(train_idx), full.subset(test_idx)


def generate_synthetic(kind: str, N: int, d: int = 1, kernel: Kernel | None = None,
                       noise: float = 0.1, seed: int = 0) -> Dataset:
    """Draw f ~ GP(0, k) at N(0, I) inputs.

    ``gp-regression``: y = f + N(0, noise).
    ``probit-classification``: y = sign(f + N(0, 1)).
    The inputs are standard normal already, so no standardization is applied.
    """
    check_gate(N, SYNTHETIC_GATE, "synthetic GP draw")
    if kind not in ("gp-regression", "probit-classification"):
        raise InputError(f"unknown synthetic kind {kind!r}")
    classification = kind == "probit-classification"
    kernel = Kernel.default(d, classification) if kernel is None else kernel
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, d))
    L, _ = cholesky_jitter(gram_matrix(kernel, X), 1e-10 * kernel.variance)
    f = L @ rng.standard_normal(N)
    if classification:
        y = np.where(f + rng.standard_normal(N) >= 0, 1.0, -1.0)
        task = CLASSIFICATION
    else:
        y = f + np.sqrt(noise) * rng.standard_normal(N) if noise > 0 else f
        task = REGRESSION
    return Dataset(X, y, np.zeros(d), np.ones(d), 0.0, 1.0, task)
