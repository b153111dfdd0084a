"""Nondimensional propeller quantities and the two airspeed models.

Direct model::

    V_a = beta1 * omega + beta2 * P**2 / omega**5

Indirect model, through the power coefficient::

    V_a = (omega / 2 pi) * D * (alpha0 + alpha1 * C_P + alpha2 * C_P**4)

``omega`` is in rad/s throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Reference C_P(J) cubic (ascending powers) and ESC-motor efficiency, kept as
# validation fixtures.
REFERENCE_CP_CUBIC = (0.074, 0.043, -0.092, -0.059)
REFERENCE_ETA = 0.87
REFERENCE_LEVER_ARM = 0.24

# Fitted coefficients per training dataset (beta1, beta2, alpha0, alpha1, alpha2).
REFERENCE_COEFFICIENTS = {
    "bem": (2.74e-2, -9.91e11, 0.869, -3.60, -8.18e3),
    "wind_tunnel": (2.63e-2, -7.82e11, 0.940, -5.86, -2.79e3),
    "flight": (2.55e-2, -7.11e11, 0.850, -3.87, -4.68e3),
    "flight_gps": (2.55e-2, -6.85e11, 1.180, -13.00, 10.30e3),
}

# (fit nRMSE, fit RMSE, test nRMSE, test RMSE) per model and training dataset
REFERENCE_ACCURACY = {
    ("direct", "bem"): (0.024, 0.72, 0.085, 0.88),
    ("direct", "wind_tunnel"): (0.095, 0.77, 0.057, 0.59),
    ("direct", "flight"): (0.046, 0.84, 0.051, 0.53),
    ("direct", "flight_gps"): (0.038, 0.94, 0.051, 0.53),
    ("indirect", "bem"): (0.016, 0.48, 0.069, 0.72),
    ("indirect", "wind_tunnel"): (0.097, 0.78, 0.056, 0.58),
    ("indirect", "flight"): (0.046, 0.84, 0.051, 0.53),
    ("indirect", "flight_gps"): (0.056, 1.39, 0.094, 0.97),
}

# airspeed ranges used to normalise the RMSE of each dataset
REFERENCE_NORMALIZATION_RANGE = {
    "bem": 30.0, "wind_tunnel": 8.0, "flight": 18.3, "flight_gps": 24.7, "test": 10.0,
}

DEFAULT_RHO = 1.225


class DegenerateFit(ArithmeticError):
    pass


@dataclass(frozen=True)
class PowerSample:
    P: float
    omega: float
    rho_a: float | None = None

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    @property
    def windmilling(self):
        return self.P < 0


@dataclass(frozen=True)
class Environment:
    D: float
    rho_a: float = DEFAULT_RHO
    l: float = REFERENCE_LEVER_ARM
    eta: float | None = None

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("propeller diameter must be positive")
        if not self.rho_a > 0:
            raise ValueError("air density must be positive")
        if not self.l >= 0:
            raise ValueError("lever arm must be non-negative")
        if self.eta is not None:
            _check_eta(self.eta)


@dataclass(frozen=True)
class EscFeedback:
    V: float
    I: float
    omega: float


@dataclass(frozen=True)
class DirectCoefficients:
    beta1: float
    beta2: float

    model = "direct"

    def as_dict(self):
        return {"beta1": self.beta1, "beta2": self.beta2}


@dataclass(frozen=True)
class IndirectCoefficients:
    alpha0: float
    alpha1: float
    alpha2: float

    model = "indirect"

    def as_dict(self):
        return {"alpha0": self.alpha0, "alpha1": self.alpha1, "alpha2": self.alpha2}


@dataclass(frozen=True)
class EfficiencyEstimate:
    eta: float
    cubic: tuple


def _positive_omega(omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(~(omega > 0)):
        raise ValueError("omega must be positive")
    return omega


def _scalar_or_array(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def advance_ratio(V_a, omega, D):
    """``J = V_a / (n D)`` with ``n = omega / 2 pi``."""
    omega = _positive_omega(omega)
    if not D > 0:
        raise ValueError("D must be positive")
    return _scalar_or_array(2.0 * math.pi * np.asarray(V_a, dtype=float) / (omega * D))


def power_coefficient(P, omega, rho_a, D):
    """``C_P = P / (rho n^3 D^5)`` with ``n`` in rev/s."""
    omega = _positive_omega(omega)
    n = omega / (2.0 * math.pi)
    return _scalar_or_array(np.asarray(P, dtype=float) / (rho_a * n**3 * D**5))


def input_power(esc):
    return esc.V * esc.I


def _check_eta(eta):
    if not 0 < eta <= 1:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")


def propeller_power(P_in, eta):
    _check_eta(eta)
    return _scalar_or_array(eta * np.asarray(P_in, dtype=float))


def pitot_correction(V_pitot, Omega_x, l=REFERENCE_LEVER_ARM):
    """Freestream speed at the right-hand propeller, offset ``l`` from the
    longitudinal axis; a positive body-x rate lowers it below the pitot value."""
    return _scalar_or_array(np.asarray(V_pitot, dtype=float) - np.asarray(Omega_x, dtype=float) * l)


def eval_direct(coeffs, P, omega, return_clamped=False):
    """Direct-model airspeed; negative outputs are clamped to zero.

    With ``return_clamped`` the boolean mask of clamped samples is returned
    as a second value.
    """
    omega = _positive_omega(omega)
    P = np.asarray(P, dtype=float)
    raw = coeffs.beta1 * omega + coeffs.beta2 * P**2 / omega**5
    clamped = raw < 0
    v = np.where(clamped, 0.0, raw)
    if return_clamped:
        return _scalar_or_array(v), _scalar_or_array(clamped)
    return _scalar_or_array(v)


def eval_indirect(coeffs, C_P, omega, D, return_clamped=False):
    omega = _positive_omega(omega)
    C_P = np.asarray(C_P, dtype=float)
    J = coeffs.alpha0 + coeffs.alpha1 * C_P + coeffs.alpha2 * C_P**4
    raw = omega / (2.0 * math.pi) * D * J
    clamped = raw < 0
    v = np.where(clamped, 0.0, raw)
    if return_clamped:
        return _scalar_or_array(v), _scalar_or_array(clamped)
    return _scalar_or_array(v)


def estimate_efficiency(bem_j, bem_cp, flight_j, flight_cp_in):
    """Fit a cubic to BEM ``C_P(J)`` and scale it onto flight ``C_P_in(J)``.

    The scale is the least-squares ``1/eta`` of ``C_P_in ~ (1/eta) cubic(J)``,
    which has the closed form ``sum(c y) / sum(c c)``.
    """
    from .gate import fit_cubic

    cubic = fit_cubic(bem_j, bem_cp)
    flight_j = np.asarray(flight_j, dtype=float)
    y = np.asarray(flight_cp_in, dtype=float)
    if flight_j.size == 0:
        raise DegenerateFit("no flight points to fit the efficiency on")
    c = cubic(flight_j)
    cc = float(c @ c)
    if cc <= 1e-300 or np.sqrt(cc / c.size) < 1e-12 * max(1.0, np.abs(cubic.coefficients).max()):
        raise DegenerateFit("cubic evaluates to ~0 at every flight advance ratio")
    inv_eta = float(c @ y) / cc
    if not inv_eta > 0:
        raise DegenerateFit(f"fitted 1/eta = {inv_eta:.4g} is not positive")
    return EfficiencyEstimate(eta=1.0 / inv_eta, cubic=tuple(cubic.coefficients.tolist()))


# ---------------------------------------------------------------------------
# serialisation


@dataclass
class CoefficientDocument:
    """JSON document shared by ``discover``, ``fit`` and ``identify-gps``."""

    coefficients: DirectCoefficients | IndirectCoefficients
    training_metadata: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self):
        doc = {
            "model": self.coefficients.model,
            "coefficients": self.coefficients.as_dict(),
            "omega_unit": "rad_s",
            "training_metadata": self.training_metadata,
        }
        doc.update(self.extra)
        return doc


def coefficients_from_json(doc):
    if doc.get("omega_unit", "rad_s") != "rad_s":
        raise ValueError(f"unsupported omega_unit {doc.get('omega_unit')!r}")
    c = doc["coefficients"]
    if doc["model"] == "direct":
        return DirectCoefficients(float(c["beta1"]), float(c["beta2"]))
    if doc["model"] == "indirect":
        return IndirectCoefficients(float(c["alpha0"]), float(c["alpha1"]), float(c["alpha2"]))
    raise ValueError(f"unknown model {doc['model']!r}")


def load_coefficients(path):
    doc = json.loads(Path(path).read_text())
    return coefficients_from_json(doc), doc


def efficiency_to_json(est, metadata=None):
    return {"eta": est.eta, "inv_eta": 1.0 / est.eta, "cubic": list(est.cubic),
            "metadata": metadata or {}}
