"""Steps shared by the command line and by programmatic use."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gate as gating
from .inflight import (WindEstimate, build_rows_direct, build_rows_indirect, rls_identify,
                       solve_batch)
from .models import (DegenerateFit, DirectCoefficients, IndirectCoefficients, eval_direct,
                     eval_indirect, power_coefficient, propeller_power)


@dataclass
class ForwardBranch:
    mask: np.ndarray
    cubic: gating.CubicFit
    critical: gating.CriticalPoints


def forward_branch(ds):
    """Converged, power-absorbing grid points past the critical advance ratio.

    The cubic is fitted to every converged point with ``P > 0``.
    """
    usable = ds.converged & (ds.power > 0) & (ds.omega > 0)
    if usable.sum() < 4:
        raise DegenerateFit("fewer than 4 usable grid points")
    cubic = gating.fit_cubic(ds.j[usable], ds.c_p[usable])
    crit = gating.critical_points(cubic)
    return ForwardBranch(usable & gating.selection_mask(ds.j, crit), cubic, crit)


def training_data(ds, mask):
    data = {"P": ds.power[mask], "omega": ds.omega[mask], "C_P": ds.c_p[mask],
            "D": ds.diameter}
    return data, ds.v_a[mask]


def _scaled_lstsq(A, y):
    s = np.linalg.norm(A, axis=0)
    s = np.where(s > 0, s, 1.0)
    if A.shape[0] < A.shape[1]:
        raise DegenerateFit(f"{A.shape[0]} samples cannot determine {A.shape[1]} coefficients")
    z, _, rank, _ = np.linalg.lstsq(A / s, y, rcond=None)
    if rank < A.shape[1]:
        raise DegenerateFit("regressors are linearly dependent")
    return z / s


def fit_direct(P, omega, v_a):
    """Least squares for ``v_a = beta1 omega + beta2 P^2 / omega^5`` (no offset)."""
    P, omega = np.asarray(P, dtype=float), np.asarray(omega, dtype=float)
    A = np.column_stack([omega, P**2 / omega**5])
    return DirectCoefficients(*(float(c) for c in _scaled_lstsq(A, np.asarray(v_a, float))))


def fit_indirect(C_P, omega, D, v_a):
    """Least squares for ``J = alpha0 + alpha1 C_P + alpha2 C_P^4``."""
    C_P, omega = np.asarray(C_P, dtype=float), np.asarray(omega, dtype=float)
    J = np.asarray(v_a, dtype=float) / (omega / (2 * math.pi) * D)
    A = np.column_stack([np.ones_like(C_P), C_P, C_P**4])
    return IndirectCoefficients(*(float(c) for c in _scaled_lstsq(A, J)))


def flight_power(flight, eta=None):
    """Shaft power estimate; without ``eta`` the electrical input power is used."""
    P_in = flight.P_in
    return P_in if eta is None else propeller_power(P_in, eta)


def predict(coeffs, flight, env):
    P = flight_power(flight, env.eta)
    omega = np.where(flight.omega > 0, flight.omega, np.nan)
    out = np.zeros(len(flight))
    ok = np.isfinite(omega)
    if isinstance(coeffs, DirectCoefficients):
        out[ok] = eval_direct(coeffs, P[ok], omega[ok])
    else:
        rho = flight.density(env.rho_a)
        cp = power_coefficient(P[ok], omega[ok], rho[ok], env.D)
        out[ok] = eval_indirect(coeffs, cp, omega[ok], env.D)
    return np.atleast_1d(out)


def _moving(flight):
    return np.hypot(np.hypot(flight.V_N, flight.V_E), flight.V_D) > 0


def gate_flight(flight, v_hat, cfg):
    """Boolean regime mask; rows with zero velocity never pass."""
    mask = np.zeros(len(flight), dtype=bool)
    moving = _moving(flight)
    if moving.any():
        alpha = gating.angle_of_attack(flight.theta[moving], flight.V_ned[moving], cfg.gamma_sign)
        mask[moving] = gating.gate(np.atleast_1d(alpha), np.asarray(v_hat)[moving], cfg)
    return mask


def flight_path(flight, cfg):
    gamma = np.zeros(len(flight))
    moving = _moving(flight)
    if moving.any():
        gamma[moving] = gating.flight_path_angle(flight.V_ned[moving], cfg.gamma_sign)
    return gamma


def identification_problem(flight, model, env, gate_cfg, seed=None):
    """Gate a log and assemble the GPS least-squares rows.

    The gate's speed proxy is the seed model's prediction when given,
    otherwise the GPS ground speed.
    """
    if seed is not None:
        v_hat = predict(seed, flight, env)
    else:
        v_hat = np.hypot(flight.V_N, flight.V_E)
    mask = gate_flight(flight, v_hat, gate_cfg) & (flight.omega > 0)
    if not mask.any():
        return None, mask
    f = flight.subset(mask)
    gamma = flight_path(f, gate_cfg)
    P = flight_power(f, env.eta)
    if model == "direct":
        problem = build_rows_direct(P, f.omega, gamma, f.psi, f.V_N, f.V_E)
    elif model == "indirect":
        cp = power_coefficient(P, f.omega, f.density(env.rho_a), env.D)
        problem = build_rows_indirect(cp, f.omega, env.D, gamma, f.psi, f.V_N, f.V_E)
    else:
        raise ValueError(f"unknown model {model!r}")
    return problem, mask


def identify(problem, method="batch", lambda_f=1.0, p0=1e8, theta0=None):
    """Returns ``(theta, wind, diagnostics)``."""
    if method == "batch":
        sol = solve_batch(problem)
        return sol.theta, sol.wind, sol.diagnostics()
    if method == "rls":
        state, _ = rls_identify(problem, lambda_f=lambda_f, p0=p0, theta0=theta0)
        theta = state.theta
        res = problem.A @ theta - problem.b
        diag = {"residual_rms": float(np.sqrt(np.mean(res**2))), "lambda_f": lambda_f,
                "n_samples": problem.n_samples}
        return theta, WindEstimate(float(theta[-2]), float(theta[-1])), diag
    raise ValueError(f"unknown method {method!r}")


def coefficients_from_theta(model, theta):
    if model == "direct":
        return DirectCoefficients(float(theta[0]), float(theta[1]))
    return IndirectCoefficients(float(theta[0]), float(theta[1]), float(theta[2]))


def estimate(flight, coeffs, env, gate_cfg):
    """Model airspeed on gated rows: ``(mask, v_hat_gated)``."""
    v_hat = predict(coeffs, flight, env)
    mask = gate_flight(flight, v_hat, gate_cfg)
    return mask, v_hat[mask]
