"""Operating-regime selection.

Training data are restricted to the advance-ratio interval where ``C_P(J)``
is monotone (the forward-flight branch past the critical point). At runtime,
where ``J`` is unknown, a pitch-minus-flight-path angle-of-attack estimate and
a low-speed threshold stand in for that test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class RankDeficient(ArithmeticError):
    pass


class ZeroVelocity(ArithmeticError):
    pass


@dataclass(frozen=True)
class CubicFit:
    c0: float
    c1: float
    c2: float
    c3: float

    @property
    def coefficients(self):
        return np.array([self.c0, self.c1, self.c2, self.c3])

    def __call__(self, J):
        J = np.asarray(J, dtype=float)
        return self.c0 + J * (self.c1 + J * (self.c2 + J * self.c3))

    def derivative(self, J):
        J = np.asarray(J, dtype=float)
        return self.c1 + J * (2.0 * self.c2 + 3.0 * J * self.c3)


@dataclass(frozen=True)
class CriticalPoints:
    j_crit: tuple = ()

    @property
    def threshold(self):
        """Lower edge of the forward-flight branch (``-inf`` if monotone)."""
        return max(self.j_crit) if self.j_crit else -math.inf


@dataclass(frozen=True)
class GateConfig:
    alpha_th: float = 25.0
    v_min: float = 5.0
    gamma_sign: int = 1

    def __post_init__(self):
        if not 0 < self.alpha_th < 90:
            raise ValueError("alpha_th must lie in (0, 90) degrees")
        if not self.v_min >= 0:
            raise ValueError("v_min must be non-negative")
        if self.gamma_sign not in (1, -1):
            raise ValueError("gamma_sign must be +1 or -1")


@dataclass(frozen=True)
class AttitudeSample:
    theta: float
    psi: float
    V_ned: tuple


def fit_cubic(J, C_P):
    """Least-squares cubic ``C_P(J)``."""
    J = np.asarray(J, dtype=float)
    C_P = np.asarray(C_P, dtype=float)
    if J.shape != C_P.shape or J.ndim != 1:
        raise ValueError("J and C_P must be 1-D arrays of equal length")
    if np.unique(J).size < 4:
        raise RankDeficient("a cubic fit needs at least 4 distinct advance ratios")
    # scale the abscissa so the Vandermonde matrix stays well conditioned
    s = max(float(np.abs(J).max()), 1e-300)
    V = np.vander(J / s, 4, increasing=True)
    coef, *_ = np.linalg.lstsq(V, C_P, rcond=None)
    coef = coef / s ** np.arange(4)
    return CubicFit(*(float(c) for c in coef))


def critical_points(fit):
    """Positive roots of ``dC_P/dJ = c1 + 2 c2 J + 3 c3 J^2``."""
    a, b, c = 3.0 * fit.c3, 2.0 * fit.c2, fit.c1
    if a == 0.0:
        roots = [] if b == 0.0 else [-c / b]
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0:
            roots = []
        elif disc == 0:
            roots = [-b / (2.0 * a)]
        else:
            # numerically stable pair
            q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
            roots = [q / a, c / q] if q != 0 else [0.0]
    return CriticalPoints(tuple(sorted(r for r in set(roots) if r > 0)))


def selection_mask(J, crit):
    """True on the forward-flight branch ``J > max(j_crit)``."""
    return np.asarray(J, dtype=float) > crit.threshold


def flight_path_angle(V_ned, gamma_sign=1):
    """``gamma = gamma_sign * arcsin(V_D / |V|)``.

    The default sign takes the expression literally, so a descending vehicle
    (positive ``V_D``) gets a positive angle. ``V_ned`` may be a single
    3-vector or an ``(N, 3)`` array.
    """
    V = np.asarray(V_ned, dtype=float)
    speed = np.linalg.norm(V, axis=-1)
    if np.any(speed <= 0):
        raise ZeroVelocity("flight path angle is undefined at zero velocity")
    ratio = np.clip(V[..., 2] / speed, -1.0, 1.0)
    gamma = gamma_sign * np.arcsin(ratio)
    return float(gamma) if np.ndim(gamma) == 0 else gamma


def angle_of_attack(theta, V_ned, gamma_sign=1):
    """Pitch minus flight path angle (radians)."""
    gamma = flight_path_angle(V_ned, gamma_sign)
    alpha = np.asarray(theta, dtype=float) - gamma
    return float(alpha) if np.ndim(alpha) == 0 else alpha


def gate(alpha, v_hat, cfg):
    """Forward-flight test: ``|alpha| < alpha_th`` and ``v_hat > v_min``.

    ``alpha`` is in radians, ``cfg.alpha_th`` in degrees.
    """
    ok = (np.abs(np.asarray(alpha, dtype=float)) < math.radians(cfg.alpha_th)) & (
        np.asarray(v_hat, dtype=float) > cfg.v_min)
    return bool(ok) if np.ndim(ok) == 0 else ok
