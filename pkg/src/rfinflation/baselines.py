"""Linear and ARMA comparison models: Lasso, Ridge and AIC-selected ARMA."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import DesignMatrix, kfold_partition


class NumericalError(ArithmeticError):
    """A fit could not be computed (singular system, too little data)."""


# ---------------------------------------------------------------------------
# penalized linear models

@dataclass(frozen=True, eq=False)
class LinearModel:
    kind: str
    lam: float
    intercept: float
    coef: np.ndarray            # on the standardized scale
    x_mean: np.ndarray
    x_scale: np.ndarray         # population std; 0 for constant columns
    y_mean: float
    feature_names: tuple = ()
    converged: bool = True
    sweeps: int = 0

    @property
    def raw_coef(self) -> np.ndarray:
        safe = np.where(self.x_scale > 0, self.x_scale, 1.0)
        return np.where(self.x_scale > 0, self.coef / safe, 0.0)

    @property
    def raw_intercept(self) -> float:
        return float(self.y_mean - self.raw_coef @ self.x_mean)

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.x_scale > 0, self.x_scale, 1.0)
        return np.where(self.x_scale > 0, (X - self.x_mean) / safe, 0.0)

    def predict(self, X) -> np.ndarray:
        return self.y_mean + self.standardize(np.atleast_2d(X)) @ self.coef

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda": self.lam, "intercept": self.raw_intercept,
                "coef": self.raw_coef.tolist(), "coef_standardized": self.coef.tolist(),
                "x_mean": self.x_mean.tolist(), "x_scale": self.x_scale.tolist(),
                "y_mean": self.y_mean, "feature_names": list(self.feature_names),
                "converged": self.converged}


def _standardized(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    safe = np.where(scale > 0, scale, 1.0)
    Z = np.where(scale > 0, (X - mean) / safe, 0.0)
    return Z, y - y.mean(), mean, scale, float(y.mean())


def _xy(design_or_X, y):
    if isinstance(design_or_X, DesignMatrix):
        return design_or_X.features, design_or_X.target, design_or_X.feature_names
    return np.asarray(design_or_X, dtype=float), np.asarray(y, dtype=float), ()


def fit_ridge(design, lam: float, y=None) -> LinearModel:
    """Minimise (1/2n)||y - Xb||^2 + (lam/2)||b||^2 on standardized columns."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X, y, names = _xy(design, y)
    Z, yc, mean, scale, ybar = _standardized(X, y)
    n, d = Z.shape
    active = scale > 0
    Za = Z[:, active]
    A = Za.T @ Za + n * lam * np.eye(Za.shape[1])
    if lam == 0 and Za.shape[1] and np.linalg.matrix_rank(A) < Za.shape[1]:
        raise NumericalError("singular normal equations at lambda = 0 (collinear features)")
    coef = np.zeros(d)
    if Za.shape[1]:
        coef[active] = np.linalg.solve(A, Za.T @ yc)
    return LinearModel("l2", float(lam), ybar, coef, mean, scale, ybar, tuple(names))


def soft_threshold(z: float, gamma: float) -> float:
    if gamma < 0:
        raise ValueError("threshold must be >= 0")
    return math.copysign(max(abs(z) - gamma, 0.0), z) if z != 0 else 0.0


def lambda_max(design, y=None) -> float:
    """Smallest penalty at which every Lasso coefficient is zero."""
    X, y, _ = _xy(design, y)
    Z, yc, *_ = _standardized(X, y)
    return float(np.max(np.abs(Z.T @ yc)) / len(yc)) if Z.shape[1] else 0.0


def fit_lasso(design, lam: float, tol: float = 1e-8, max_sweeps: int = 10000,
              y=None, warm_start=None) -> LinearModel:
    """Cyclic coordinate descent for (1/2n)||y - Xb||^2 + lam||b||_1."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X, y, names = _xy(design, y)
    Z, yc, mean, scale, ybar = _standardized(X, y)
    beta = np.zeros(Z.shape[1]) if warm_start is None else np.array(warm_start, dtype=float)
    beta, sweeps, converged = _kernels.lasso_cd(np.ascontiguousarray(Z), yc, float(lam),
                                                beta, float(tol), int(max_sweeps))
    return LinearModel("l1", float(lam), ybar, beta, mean, scale, ybar, tuple(names),
                       bool(converged), int(sweeps))


def kkt_residuals(model: LinearModel, design, y=None) -> np.ndarray:
    """Per-coordinate violation of the Lasso optimality conditions."""
    X, y, _ = _xy(design, y)
    Z, yc, *_ = _standardized(X, y)
    g = Z.T @ (yc - Z @ model.coef) / len(yc)
    lam = model.lam
    active = model.coef != 0
    out = np.where(active, np.abs(g - lam * np.sign(model.coef)),
                   np.maximum(np.abs(g) - lam, 0.0))
    return out


def default_lambda_grid(design, y=None, n: int = 50, ratio: float = 1e-4) -> np.ndarray:
    top = lambda_max(design, y)
    if top <= 0:
        return np.array([0.0])
    return np.geomspace(top, top * ratio, n)


def fit_linear(kind: str, X, y, lam: float) -> LinearModel:
    if kind == "l1":
        return fit_lasso(X, lam, y=y)
    if kind == "l2":
        return fit_ridge(X, lam, y=y)
    raise ValueError(f"unknown penalty kind {kind!r}")


def cv_lambda(design: DesignMatrix, kind: str, grid=None, k: int = 10, seed: int = 0) -> float:
    """Grid penalty with the lowest mean k-fold MAE; ties go to the larger penalty."""
    grid = default_lambda_grid(design) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    folds = kfold_partition(design.n_rows, k, seed)
    X, y = design.features, design.target
    scores = np.zeros(grid.size)
    for held in folds:
        mask = np.ones(len(y), dtype=bool)
        mask[held] = False
        for i, lam in enumerate(grid):
            model = fit_linear(kind, X[mask], y[mask], lam)
            scores[i] += np.mean(np.abs(model.predict(X[held]) - y[held]))
    scores /= len(folds)
    best = scores.min()
    tied = grid[scores - best <= 1e-12]
    return float(tied.max())


# ---------------------------------------------------------------------------
# ARMA via Hannan-Rissanen

@dataclass(frozen=True, eq=False)
class ArmaModel:
    p: int
    q: int
    intercept: float
    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    aic: float
    nobs: int
    resid: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "intercept": self.intercept,
                "ar": self.ar.tolist(), "ma": self.ma.tolist(), "sigma2": self.sigma2,
                "aic": self.aic, "nobs": self.nobs}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def aic_value(rss: float, nobs: int, n_params: int) -> float:
    if rss <= 0:
        return -math.inf
    return nobs * math.log(rss / nobs) + 2 * n_params


def default_long_order(n: int, p: int, q: int) -> int:
    return max(int(math.floor(math.log(n) ** 2)), 2 * max(p, q), 1)


def _lstsq(A, b):
    coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < A.shape[1]:
        raise NumericalError("singular regression")
    return coef


def long_ar_residuals(y: np.ndarray, order: int) -> np.ndarray:
    """Residuals of an OLS AR(order) with intercept; NaN for the first ``order`` slots."""
    n = y.size
    A = np.column_stack([np.ones(n - order)] + [y[order - i:n - i] for i in range(1, order + 1)])
    coef = _lstsq(A, y[order:])
    out = np.full(n, np.nan)
    out[order:] = y[order:] - A @ coef
    return out


def fit_arma(series, p: int, q: int, long_order: int | None = None,
             start: int | None = None) -> ArmaModel:
    """Two-pass least squares ARMA(p, q) estimate.

    A long autoregression supplies innovation proxies; the series is then
    regressed on an intercept, its own p lags and q lagged proxies.
    ``start`` fixes the first modelled index so nested orders share a sample.
    """
    y = np.asarray(series, dtype=float)
    n = y.size
    if p < 0 or q < 0:
        raise ValueError("orders must be non-negative")
    if n < 10 * (p + q + 1):
        raise NumericalError(f"series of length {n} too short for ARMA({p},{q})")
    if q > 0:
        m = default_long_order(n, p, q) if long_order is None else long_order
        eps = long_ar_residuals(y, m)
        first = m + q
    else:
        eps = None
        first = 0
    first = max(first, p)
    if start is not None:
        if start < first:
            raise ValueError(f"start {start} earlier than the first usable index {first}")
        first = start
    t = np.arange(first, n)
    cols = [np.ones(t.size)]
    cols += [y[t - i] for i in range(1, p + 1)]
    cols += [eps[t - j] for j in range(1, q + 1)]
    A = np.column_stack(cols)
    # the sample mean is exact where lstsq leaves rounding residue on constant series
    coef = np.array([y[t].mean()]) if p == q == 0 else _lstsq(A, y[t])
    resid = y[t] - A @ coef
    rss = float(resid @ resid)
    nobs = t.size
    return ArmaModel(p, q, float(coef[0]), coef[1:1 + p].copy(), coef[1 + p:].copy(),
                     rss / nobs, aic_value(rss, nobs, p + q + 1), nobs, resid)


def select_arma(series, max_p: int = 5, max_q: int = 5) -> ArmaModel:
    """Minimum-AIC ARMA over 0..max_p x 0..max_q on a common estimation sample.

    Ties go to the smaller p + q, then the smaller p.
    """
    y = np.asarray(series, dtype=float)
    n = y.size
    m = default_long_order(n, max_p, max_q)
    start = max(m + max_q, max_p)
    fits = []
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            try:
                model = fit_arma(y, p, q, long_order=m if q else None, start=start)
            except (NumericalError, ValueError):
                continue
            fits.append(model)
    if not fits:
        raise NumericalError("no ARMA order could be fitted")
    best = min(m.aic for m in fits)
    tied = [f for f in fits if f.aic == best or f.aic - best <= 1e-9]
    tied.sort(key=lambda f: (f.p + f.q, f.p))
    return tied[0]


def arma_forecast_1step(model: ArmaModel, history, residual_history=None) -> float:
    """intercept + sum(ar_i * y[-i]) + sum(ma_j * e[-j])."""
    y = np.asarray(history, dtype=float)
    e = np.asarray(model.resid if residual_history is None else residual_history, dtype=float)
    if y.size < model.p or e.size < model.q:
        raise ValueError("insufficient history for a one-step forecast")
    out = model.intercept
    for i in range(1, model.p + 1):
        out += model.ar[i - 1] * y[-i]
    for j in range(1, model.q + 1):
        out += model.ma[j - 1] * e[-j]
    return float(out)
