"""Elastic-net gene fusion, RMSE and k-fold cross-validation.

The fitted objective is

    (1/n) * sum((y - X b - b0)**2) + lambda1 * |b|_1 + lambda2 * |b|_2**2

on internally standardised columns (zero mean, unit population variance);
coefficients are mapped back to the original column scale on return and the
intercept is never penalised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import InputError

DEFAULT_LAMBDA1 = 1e-3
DEFAULT_LAMBDA2 = 1e-3
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 10_000
ZERO_VARIANCE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinearFit:
    beta: np.ndarray
    intercept: float
    lambda1: float
    lambda2: float
    train_rmse: float
    n_iter: int = 0
    converged: bool = True

    @property
    def n_columns(self) -> int:
        return len(self.beta)


def _as_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError("design matrix must be 2-D")
    return X


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite values")


def fit_elastic_net(X, y, lambda1: float = DEFAULT_LAMBDA1, lambda2: float = DEFAULT_LAMBDA2,
                    tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> LinearFit:
    """Fit ``y ~ X`` by cyclic coordinate descent.

    Zero-variance columns get a coefficient of exactly zero. Convergence is
    declared when the largest coefficient change in a sweep (standardised
    scale) drops below ``tol``.
    """
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if n < 2:
        raise InputError("need at least 2 rows to fit")
    if len(y) != n:
        raise InputError(f"X has {n} rows but y has {len(y)}")
    if lambda1 < 0 or lambda2 < 0:
        raise InputError("penalties must be non-negative")
    _check_finite("X", X)
    _check_finite("y", y)

    y_mean = y.mean()
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    active = sd > ZERO_VARIANCE_RTOL * np.maximum(1.0, np.abs(mean))
    beta = np.zeros(p)
    n_iter = 0
    if active.any():
        Z = (X[:, active] - mean[active]) / sd[active]
        yc = y - y_mean
        G = np.ascontiguousarray(Z.T @ Z / n)
        c = np.ascontiguousarray(Z.T @ yc / n)
        b = np.zeros(len(c))
        n_iter = int(_backend.enet_cd(G, c, float(lambda1), float(lambda2), float(tol),
                                      int(max_iters), b))
        beta[active] = b / sd[active]
    intercept = float(y_mean - beta @ mean)
    resid = X @ beta + intercept - y
    return LinearFit(beta=beta, intercept=intercept, lambda1=float(lambda1),
                     lambda2=float(lambda2), train_rmse=float(np.sqrt(np.mean(resid ** 2))),
                     n_iter=n_iter, converged=n_iter < max_iters)


def predict(fit: LinearFit, X) -> np.ndarray:
    X = _as_design(X)
    if X.shape[1] != fit.n_columns:
        raise InputError(f"expected {fit.n_columns} columns, got {X.shape[1]}")
    return X @ fit.beta + fit.intercept


def rmse(yhat, y) -> float:
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(yhat) != len(y):
        raise InputError(f"length mismatch: {len(yhat)} vs {len(y)}")
    if len(y) == 0:
        raise InputError("rmse of empty vectors")
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


def objective(X, y, fit: LinearFit) -> float:
    """Penalised objective in the standardised coefficient scale."""
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64)
    sd = X.std(axis=0)
    b_std = fit.beta * sd
    resid = predict(fit, X) - y
    return float(np.mean(resid ** 2) + fit.lambda1 * np.abs(b_std).sum()
                 + fit.lambda2 * (b_std ** 2).sum())


def make_folds(n: int, k: int, rng) -> np.ndarray:
    """Fold label per row from a seeded shuffle; fold sizes differ by at most 1."""
    if k < 2:
        raise InputError("k must be >= 2")
    if n < k:
        raise InputError(f"cannot split {n} rows into {k} folds")
    folds = np.empty(n, dtype=np.intp)
    for f, idx in enumerate(np.array_split(rng.permutation(n), k)):
        folds[idx] = f
    return folds


def kfold_cv_rmse(X, y, k: int = 5, lambda1: float = DEFAULT_LAMBDA1,
                  lambda2: float = DEFAULT_LAMBDA2, rng=None, folds=None,
                  tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> float:
    """Mean held-out RMSE over ``k`` folds.

    Pass ``folds`` (from :func:`make_folds`) to share one fold assignment
    across many calls; otherwise it is drawn from ``rng``.
    """
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]
    if folds is None:
        if rng is None:
            raise InputError("either folds or rng is required")
        folds = make_folds(n, k, rng)
    else:
        folds = np.asarray(folds)
        if len(folds) != n:
            raise InputError("fold labels do not match row count")
        k = int(folds.max()) + 1
    scores = []
    for f in range(k):
        test = folds == f
        train = ~test
        if train.sum() < 2:
            raise InputError("a training fold has fewer than 2 rows")
        fit = fit_elastic_net(X[train], y[train], lambda1, lambda2, tol, max_iters)
        scores.append(rmse(predict(fit, X[test]), y[test]))
    return float(np.mean(scores))
