"""Sparse model discovery: candidate feature libraries, pathwise LASSO by
cyclic coordinate descent, k-fold cross-validation and one-standard-error
model selection.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

DEFAULT_P_POWERS = (0, 1, 2)
DEFAULT_OMEGA_POWERS = tuple(range(-5, 3))
DEFAULT_CP_POWERS = tuple(range(0, 7))


class NonFinite(ValueError):
    pass


class DegenerateColumnWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# feature libraries


@dataclass
class FeatureLibrary:
    """Ordered candidate features evaluated column-wise on a data mapping.

    ``intercept_name`` names a constant feature, which is carried by the
    unpenalised intercept instead of a design column.
    """

    names: list
    evaluators: list
    target_transform: Callable | None = None
    intercept_name: str | None = None

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        if len(self.names) != len(self.evaluators):
            raise ValueError("one evaluator per feature name")

    def __len__(self):
        return len(self.names)

    def matrix(self, data):
        cols = [np.broadcast_to(np.asarray(f(data), dtype=float), np.shape(data["omega"]))
                for f in self.evaluators]
        return np.column_stack(cols) if cols else np.empty((len(data["omega"]), 0))

    def target(self, data, v_a):
        v_a = np.asarray(v_a, dtype=float)
        return v_a if self.target_transform is None else self.target_transform(data, v_a)


def _monomial_name(a, b):
    p = {0: "", 1: "P"}.get(a, f"P{a}")
    w = "omega" if abs(b) == 1 else f"omega{abs(b)}"
    if b == 0:
        return p
    if b > 0:
        return f"{p}_{w}" if p else w
    return f"{p}_over_{w}" if p else f"inv_{w}"


def _check_omega(omega):
    omega = np.asarray(omega, dtype=float)
    if omega.size == 0:
        raise ValueError("no records")
    if np.any(~(omega > 0)):
        raise ValueError("all records need omega > 0")
    return omega


def build_features_direct(P, omega, omega_dot=None, p_powers=DEFAULT_P_POWERS,
                          omega_powers=DEFAULT_OMEGA_POWERS, rate_terms=True):
    """Monomials ``P^a omega^b`` plus, optionally, ``omega_dot`` and ``omega_dot/omega``.

    ``P**2/omega**5`` is named ``P2_over_omega5``; plain ``omega`` is ``omega``.
    The constant monomial is left to the intercept.
    """
    _check_omega(omega)
    if np.shape(P) != np.shape(omega):
        raise ValueError("P and omega must have the same shape")
    names, evals = [], []
    for a in p_powers:
        for b in omega_powers:
            if a == 0 and b == 0:
                continue
            names.append(_monomial_name(a, b))
            evals.append(lambda d, a=a, b=b: d["P"] ** a * d["omega"] ** float(b))
    if rate_terms:
        names += ["omega_dot", "omega_dot_over_omega"]
        evals += [lambda d: _rate(d), lambda d: _rate(d) / d["omega"]]
    return FeatureLibrary(names, evals)


def _rate(d):
    rate = d.get("omega_dot")
    return np.zeros_like(d["omega"]) if rate is None else np.asarray(rate, dtype=float)


def indirect_target(data, v_a):
    """``V_a / ((omega / 2 pi) D)``, i.e. the advance ratio."""
    return v_a / (data["omega"] / (2.0 * math.pi) * data["D"])


def build_features_indirect(C_P, omega, powers=DEFAULT_CP_POWERS):
    """Powers ``C_P^k``, named ``cp0``, ``cp1``, ...; the target is ``J``."""
    _check_omega(omega)
    if np.shape(C_P) != np.shape(omega):
        raise ValueError("C_P and omega must have the same shape")
    names = [f"cp{k}" for k in powers]
    evals = [lambda d, k=k: d["C_P"] ** float(k) for k in powers]
    return FeatureLibrary(names, evals, target_transform=indirect_target,
                          intercept_name="cp0" if 0 in powers else None)


# ---------------------------------------------------------------------------
# coordinate descent


@njit(cache=True)
def _cd_gram(G, c, yy, lam, w, tol, max_sweeps, history):
    """Cyclic coordinate descent on the Gram form of the LASSO objective.

    ``G = X'X/N``, ``c = X'y/N``, ``yy = y'y/N``. ``history`` receives the
    objective after each sweep (pass a length-0 array to skip it).
    """
    p = w.size
    Gw = G @ w
    n_sweeps = 0
    keep = history.size > 0
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            wj = w[j]
            rho = c[j] - Gw[j] + gjj * wj
            if rho > lam:
                new = (rho - lam) / gjj
            elif rho < -lam:
                new = (rho + lam) / gjj
            else:
                new = 0.0
            delta = new - wj
            if delta != 0.0:
                w[j] = new
                for k in range(p):
                    Gw[k] += G[k, j] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
        n_sweeps = sweep + 1
        if keep and sweep < history.size:
            obj = 0.5 * yy + lam * np.sum(np.abs(w))
            for j in range(p):
                obj += w[j] * (0.5 * Gw[j] - c[j])
            history[sweep] = obj
        if max_change < tol:
            break
    return n_sweeps


def lasso_objective(X, y, w, lam):
    N = X.shape[0]
    r = y - X @ w
    return 0.5 * float(r @ r) / N + lam * float(np.abs(w).sum())


def _check_finite(X, y):
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFinite("design matrix or target contains non-finite values")


def lasso_coordinate_descent(X, y, lam, w0=None, tol=1e-10, max_sweeps=100_000,
                             return_history=False):
    """Minimise ``(1/2N)|y - Xw|^2 + lam |w|_1``.

    ``X`` is expected standardised and ``y`` centred (no intercept is fitted).
    Stops when no coefficient moves by more than ``tol`` in a sweep.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(X, y)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    N = X.shape[0]
    G = X.T @ X / N
    c = X.T @ y / N
    w = np.zeros(X.shape[1]) if w0 is None else np.array(w0, dtype=float)
    history = np.full(max_sweeps if return_history else 0, np.nan)
    n = _cd_gram(G, c, float(y @ y) / N, float(lam), w, tol, max_sweeps, history)
    if return_history:
        return w, history[:n]
    return w


def lambda_max(X, y):
    return float(np.abs(X.T @ y).max()) / X.shape[0] if X.shape[1] else 0.0


def lambda_grid(lam_max, n_lambdas=100, ratio=1e-4):
    return lam_max * np.logspace(0.0, math.log10(ratio), n_lambdas)


def _path(G, c, yy, lambdas, tol, max_sweeps):
    coefs = np.zeros((G.shape[0], len(lambdas)))
    w = np.zeros(G.shape[0])
    empty = np.empty(0)
    for i, lam in enumerate(lambdas):
        _cd_gram(G, c, yy, float(lam), w, tol, max_sweeps, empty)
        coefs[:, i] = w
    return coefs


def lasso_path(X, y, lambdas, tol=1e-10, max_sweeps=100_000):
    """Warm-started path over a decreasing ``lambdas`` grid (standardised X, centred y)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(X, y)
    N = X.shape[0]
    return _path(X.T @ X / N, X.T @ y / N, float(y @ y) / N, np.asarray(lambdas, dtype=float),
                 tol, max_sweeps)


# ---------------------------------------------------------------------------
# cross-validated path


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        return cls(X.mean(axis=0), X.std(axis=0))

    def transform(self, X):
        return (X - self.mean) / self.scale


@dataclass
class LassoPath:
    lambdas: np.ndarray
    coefs: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    names: list
    standardizer: Standardizer
    y_mean: float
    fold_errors: np.ndarray = field(repr=False, default=None)
    X: np.ndarray = field(repr=False, default=None)
    y: np.ndarray = field(repr=False, default=None)
    intercept_name: str | None = None
    dropped: list = field(default_factory=list)

    def predict(self, X, index):
        """Predict in original units with the path coefficients at ``index``."""
        Xs = self.standardizer.transform(np.asarray(X, dtype=float))
        return Xs @ self.coefs[:, index] + self.y_mean

    def original_coefficients(self, index):
        w = self.coefs[:, index] / self.standardizer.scale
        return w, self.y_mean - float(self.standardizer.mean @ w)


@dataclass
class SelectedModel:
    support: list
    coefficients: dict
    intercept: float
    lambda_selected: float
    cv_error: float
    index: int

    def predict(self, data_matrix, names):
        """Evaluate on a design matrix whose columns are named by ``names``."""
        col = {n: i for i, n in enumerate(names)}
        out = np.full(data_matrix.shape[0], self.intercept)
        for name, value in self.coefficients.items():
            if name in col:
                out += value * data_matrix[:, col[name]]
        return out

    def to_json(self):
        return {"support": list(self.support), "coefficients": dict(self.coefficients),
                "intercept": self.intercept, "lambda_selected": self.lambda_selected,
                "cv_error": self.cv_error}


def _drop_degenerate(X, names, intercept_name=None):
    scale = X.std(axis=0)
    spread = np.abs(X).max(axis=0) if X.size else scale
    keep = scale > 1e-12 * np.maximum(spread, 1e-300)
    dropped = [n for n, k in zip(names, keep) if not k]
    unexpected = [n for n in dropped if n != intercept_name]
    if unexpected:
        warnings.warn(f"dropping zero-variance features: {', '.join(unexpected)}",
                      DegenerateColumnWarning, stacklevel=3)
    return keep, dropped


def fold_assignment(N, k, seed):
    rng = np.random.default_rng(seed)
    folds = np.empty(N, dtype=int)
    folds[rng.permutation(N)] = np.arange(N) % k
    return folds


def cv_lasso(X, y, k=10, lambdas=None, seed=0, names=None, n_lambdas=100, ratio=1e-4,
             tol=1e-10, max_sweeps=100_000, intercept_name=None):
    """k-fold cross-validated LASSO path on raw (unstandardised) data.

    Each training fold is standardised with its own statistics; the held-out
    error is the mean squared error in the original target units.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(X, y)
    N = X.shape[0]
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > N:
        raise ValueError(f"cannot split {N} samples into {k} folds")
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    keep, dropped = _drop_degenerate(X, names, intercept_name)
    X = X[:, keep]
    names = [n for n, kk in zip(names, keep) if kk]

    std = Standardizer.fit(X)
    Xs = std.transform(X)
    y_mean = float(y.mean())
    yc = y - y_mean
    if lambdas is None:
        lambdas = lambda_grid(lambda_max(Xs, yc), n_lambdas, ratio)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be strictly decreasing")

    folds = fold_assignment(N, k, seed)
    errors = np.zeros((k, len(lambdas)))
    for f in range(k):
        train, test = folds != f, folds == f
        s = Standardizer.fit(X[train])
        s.scale = np.where(s.scale > 0, s.scale, 1.0)
        Xt = s.transform(X[train])
        yt_mean = float(y[train].mean())
        yt = y[train] - yt_mean
        n = Xt.shape[0]
        coefs = _path(Xt.T @ Xt / n, Xt.T @ yt / n, float(yt @ yt) / n, lambdas, tol, max_sweeps)
        pred = s.transform(X[test]) @ coefs + yt_mean
        errors[f] = np.mean((pred - y[test][:, None]) ** 2, axis=0)

    coefs = _path(Xs.T @ Xs / N, Xs.T @ yc / N, float(yc @ yc) / N, lambdas, tol, max_sweeps)
    return LassoPath(lambdas=lambdas, coefs=coefs, cv_mean=errors.mean(axis=0),
                     cv_se=errors.std(axis=0, ddof=1) / math.sqrt(k), names=names,
                     standardizer=std, y_mean=y_mean, fold_errors=errors, X=X, y=y,
                     intercept_name=intercept_name, dropped=dropped)


def one_se_index(path):
    """Sparsest model whose CV error is within one standard error of the minimum.

    Ties in the number of active features go to the larger lambda. Models
    with at least one feature are preferred over the empty one.
    """
    i_min = int(np.argmin(path.cv_mean))
    limit = path.cv_mean[i_min] + path.cv_se[i_min]
    candidates = np.flatnonzero(path.cv_mean <= limit)
    nnz = np.count_nonzero(path.coefs, axis=0)
    nonempty = candidates[nnz[candidates] > 0]
    if nonempty.size:
        candidates = nonempty
    return int(min(candidates, key=lambda i: (nnz[i], i)))


def select_lambda(path, refit=True):
    """Pick lambda by the one-standard-error rule and return the model in
    original units, refitted by ordinary least squares on its support."""
    idx = one_se_index(path)
    active = np.flatnonzero(path.coefs[:, idx])
    support = [path.names[j] for j in active]
    if refit and path.X is not None:
        w, b = _refit(path.X[:, active], path.y)
    else:
        w_all, b = path.original_coefficients(idx)
        w = w_all[active]
    coefficients = {name: float(v) for name, v in zip(support, w)}
    if path.intercept_name is not None:
        support = [path.intercept_name] + support
        coefficients = {path.intercept_name: float(b), **coefficients}
    return SelectedModel(support=support, coefficients=coefficients, intercept=float(b),
                         lambda_selected=float(path.lambdas[idx]),
                         cv_error=float(path.cv_mean[idx]), index=idx)


def _refit(X, y):
    """Least squares with intercept, solved on standardised columns."""
    if X.shape[1] == 0:
        return np.zeros(0), float(y.mean())
    s = Standardizer.fit(X)
    A = np.column_stack([np.ones(X.shape[0]), s.transform(X)])
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    w = sol[1:] / s.scale
    return w, float(sol[0] - s.mean @ w)


def discover(library, data, v_a, k=10, seed=0, n_lambdas=100, ratio=1e-4):
    """Build the design from ``library``, run the CV path, select a model."""
    X = library.matrix(data)
    y = library.target(data, v_a)
    path = cv_lasso(X, y, k=k, seed=seed, names=library.names, n_lambdas=n_lambdas,
                    ratio=ratio, intercept_name=library.intercept_name)
    return select_lambda(path), path
