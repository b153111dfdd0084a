"""In-flight coefficient identification from GPS ground velocity.

Horizontal ground velocity is modelled as the model airspeed projected on the
heading, ``V_a cos(gamma) [cos psi, sin psi]``, plus a constant horizontal
wind. Because both airspeed models are linear in their coefficients, each
sample contributes two linear rows in the unknowns (model coefficients, wind
north, wind east), solved either in batch or recursively.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

ILL_CONDITIONED = 1e10

DIRECT_UNKNOWNS = ("beta1", "beta2", "v_wn", "v_we")
INDIRECT_UNKNOWNS = ("alpha0", "alpha1", "alpha2", "v_wn", "v_we")


class IllConditioned(UserWarning):
    """Wind and airspeed coefficients are not separable from the given rows."""


@dataclass(frozen=True)
class GpsRow:
    V_N: float
    V_E: float
    V_D: float
    psi: float
    gamma: float


@dataclass(frozen=True)
class WindEstimate:
    V_wN: float
    V_wE: float

    @property
    def speed(self):
        return math.hypot(self.V_wN, self.V_wE)


@dataclass
class BatchProblem:
    A: np.ndarray
    b: np.ndarray
    unknowns: tuple

    def __post_init__(self):
        if self.A.shape[0] != self.b.shape[0] or self.A.shape[0] % 2:
            raise ValueError("need two stacked rows (north, east) per sample")
        if self.A.shape[1] != len(self.unknowns):
            raise ValueError("column count must match the unknowns")

    @property
    def n_samples(self):
        return self.A.shape[0] // 2

    def __add__(self, other):
        if self.unknowns != other.unknowns:
            raise ValueError("cannot stack problems with different unknowns")
        return BatchProblem(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]),
                            self.unknowns)


def _stack(regressors, gamma, psi, V_N, V_E):
    """Interleave north/east rows: ``[x cos(g) cos(psi), 1, 0]`` and ``[x cos(g) sin(psi), 0, 1]``."""
    regressors = np.atleast_2d(regressors)
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    n, m = regressors.shape
    A = np.zeros((2 * n, m + 2))
    cg = np.cos(gamma)
    A[0::2, :m] = regressors * (cg * np.cos(psi))[:, None]
    A[1::2, :m] = regressors * (cg * np.sin(psi))[:, None]
    A[0::2, m] = 1.0
    A[1::2, m + 1] = 1.0
    b = np.empty(2 * n)
    b[0::2] = V_N
    b[1::2] = V_E
    return A, b


def direct_regressors(P, omega):
    P = np.atleast_1d(np.asarray(P, dtype=float))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(~(omega > 0)):
        raise ValueError("omega must be positive")
    return np.column_stack([omega, P**2 / omega**5])


def indirect_regressors(C_P, omega, D):
    C_P = np.atleast_1d(np.asarray(C_P, dtype=float))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(~(omega > 0)):
        raise ValueError("omega must be positive")
    nD = omega / (2.0 * math.pi) * D
    return nD[:, None] * np.column_stack([np.ones_like(C_P), C_P, C_P**4])


def build_rows_direct(P, omega, gamma, psi, V_N, V_E):
    """Rows for ``[beta1, beta2, V_wN, V_wE]``; inputs may be scalars or arrays."""
    A, b = _stack(direct_regressors(P, omega), gamma, psi, V_N, V_E)
    return BatchProblem(A, b, DIRECT_UNKNOWNS)


def build_rows_indirect(C_P, omega, D, gamma, psi, V_N, V_E):
    """Rows for ``[alpha0, alpha1, alpha2, V_wN, V_wE]``; the ``(omega/2pi) D``
    factor of the indirect model is part of each regressor."""
    A, b = _stack(indirect_regressors(C_P, omega, D), gamma, psi, V_N, V_E)
    return BatchProblem(A, b, INDIRECT_UNKNOWNS)


@dataclass
class BatchSolution:
    theta: np.ndarray
    unknowns: tuple
    wind: WindEstimate
    residual_rms: float
    condition: float
    ill_conditioned: bool
    residual: np.ndarray = field(repr=False)

    @property
    def coefficients(self):
        return dict(zip(self.unknowns[:-2], self.theta[:-2].tolist()))

    def diagnostics(self):
        return {"residual_rms": self.residual_rms, "condition": self.condition,
                "ill_conditioned": self.ill_conditioned,
                "n_samples": int(self.residual.size // 2)}


def column_scale(A):
    s = np.linalg.norm(A, axis=0)
    return np.where(s > 0, s, 1.0)


def solve_batch(problem, threshold=ILL_CONDITIONED):
    """Least squares via QR on column-equilibrated rows.

    The conditioning indicator is the ratio of extreme singular values of the
    equilibrated matrix, so it reflects identifiability rather than the very
    different physical scales of the regressors. Above ``threshold`` an
    :class:`IllConditioned` warning is issued; the solution is still returned.
    """
    A, b = problem.A, problem.b
    n, m = A.shape
    if n < m:
        raise ValueError(f"{n} rows cannot determine {m} unknowns")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite values in the identification rows")
    s = column_scale(A)
    As = A / s
    sv = np.linalg.svd(As, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    ill = cond > threshold
    if ill:
        warnings.warn(f"identification problem is ill-conditioned (condition {cond:.3g}); "
                      "wind and airspeed terms are not separable", IllConditioned, stacklevel=2)
    Q, R = np.linalg.qr(As)
    if ill:
        z, *_ = np.linalg.lstsq(As, b, rcond=None)
    else:
        z = np.linalg.solve(R, Q.T @ b)
    theta = z / s
    res = A @ theta - b
    return BatchSolution(theta=theta, unknowns=problem.unknowns,
                         wind=WindEstimate(float(theta[-2]), float(theta[-1])),
                         residual_rms=float(np.sqrt(np.mean(res**2))), condition=cond,
                         ill_conditioned=ill, residual=res)


# ---------------------------------------------------------------------------
# recursive least squares


@dataclass
class RlsState:
    """Exponentially forgetting RLS in column-scaled coordinates.

    Regressor column ``j`` is divided by ``scale[j]`` before the update, so
    ``theta_scaled = theta * scale`` and ``P_cov`` live in those units; this
    keeps a ``p0 * I`` prior meaningful when columns differ by many orders of
    magnitude. ``p_max`` caps the covariance diagonal, which stops windup
    under forgetting without excitation.
    """

    theta_scaled: np.ndarray
    P_cov: np.ndarray
    lambda_f: float = 1.0
    scale: np.ndarray = None
    p_max: float = 1e8
    n_updates: int = 0

    def __post_init__(self):
        if not 0 < self.lambda_f <= 1:
            raise ValueError("forgetting factor must lie in (0, 1]")
        if self.scale is None:
            self.scale = np.ones(self.theta_scaled.size)

    @classmethod
    def initial(cls, n, theta0=None, p0=1e8, lambda_f=1.0, scale=None, p_max=None):
        scale = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
        theta0 = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
        return cls(theta_scaled=theta0 * scale, P_cov=p0 * np.eye(n), lambda_f=lambda_f,
                   scale=scale, p_max=p0 if p_max is None else p_max)

    @property
    def theta(self):
        return self.theta_scaled / self.scale

    def copy(self):
        return RlsState(self.theta_scaled.copy(), self.P_cov.copy(), self.lambda_f,
                        self.scale.copy(), self.p_max, self.n_updates)


def rls_update(state, rows, targets):
    """Process ``rows`` (shape ``(k, n)``) one scalar observation at a time.

    Returns a new state; ``state`` is not modified.
    """
    new = state.copy()
    rows = np.atleast_2d(np.asarray(rows, dtype=float)) / new.scale
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    lam = new.lambda_f
    theta, P = new.theta_scaled, new.P_cov
    for a, y in zip(rows, targets):
        Pa = P @ a
        denom = lam + a @ Pa
        k = Pa / denom
        theta = theta + k * (y - a @ theta)
        P = P - np.outer(k, Pa)
        if lam < 1.0 and np.max(np.diag(P)) < new.p_max * lam:
            P = P / lam
        P = 0.5 * (P + P.T)
        new.n_updates += 1
    new.theta_scaled, new.P_cov = theta, P
    return new


def rls_identify(problem, lambda_f=1.0, p0=1e8, theta0=None, scale=None):
    """Run RLS over a stacked problem in row order; returns the final state
    and the parameter history after each sample (both rows)."""
    if scale is None:
        scale = np.sqrt(np.mean(problem.A**2, axis=0))
        scale = np.where(scale > 0, scale, 1.0)
    state = RlsState.initial(problem.A.shape[1], theta0=theta0, p0=p0, lambda_f=lambda_f,
                             scale=scale)
    history = np.empty((problem.n_samples, problem.A.shape[1]))
    for i in range(problem.n_samples):
        sl = slice(2 * i, 2 * i + 2)
        state = rls_update(state, problem.A[sl], problem.b[sl])
        history[i] = state.theta
    return state, history
