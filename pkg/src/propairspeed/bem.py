"""Blade element momentum solver for a propeller in axial inflow.

The section equations are solved in the inflow angle ``phi`` with a single
residual, which always has a sign change on ``(eps, pi/2]`` for a lifting
propeller section, so plain bisection is enough to converge.

Sign convention is the propeller one: the axial induction ``a`` is positive
when the disc accelerates the flow (``V_a (1 + a)`` through the disc) and the
tangential induction ``a_prime`` is positive when the swirl reduces the
relative tangential speed (``omega r (1 - a_prime)``).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import DEFAULT_RHO, advance_ratio, power_coefficient

log = logging.getLogger(__name__)

PHI_MIN = 1e-6
PHI_MAX = 0.5 * math.pi
RESIDUAL_TOL = 1e-8
MAX_BISECTIONS = 200
LOSS_FLOOR = 1e-6

DATASET_HEADER = ("v_a", "omega_rad_s", "power_w", "j", "c_p", "converged")

RPM_TO_RAD_S = 2.0 * math.pi / 60.0


class NoBracket(ArithmeticError):
    """The section residual does not change sign on the search interval."""

    def __init__(self, flow, r):
        self.flow = flow
        self.r = r
        super().__init__(
            f"no sign change of the BEM residual at r={r:.4g} m "
            f"(V_a={flow.V_a:.4g} m/s, omega={flow.omega:.4g} rad/s)"
        )


@dataclass(frozen=True)
class AirfoilPolar:
    """Tabulated section polar; angles in radians."""

    alpha_grid: np.ndarray
    cl: np.ndarray
    cd: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha_grid, dtype=float)
        cl = np.asarray(self.cl, dtype=float)
        cd = np.asarray(self.cd, dtype=float)
        if alpha.ndim != 1 or alpha.size < 2:
            raise ValueError("alpha_grid needs at least two samples")
        if np.any(np.diff(alpha) <= 0):
            raise ValueError("alpha_grid must be strictly increasing")
        if cl.shape != alpha.shape or cd.shape != alpha.shape:
            raise ValueError("cl and cd must match alpha_grid in length")
        if np.any(cd < 0):
            raise ValueError("cd must be non-negative")
        object.__setattr__(self, "alpha_grid", alpha)
        object.__setattr__(self, "cl", cl)
        object.__setattr__(self, "cd", cd)

    def evaluate(self, alpha):
        # np.interp holds the endpoint values outside the table
        return (np.interp(alpha, self.alpha_grid, self.cl),
                np.interp(alpha, self.alpha_grid, self.cd))


@dataclass(frozen=True)
class BladeGeometry:
    """Blade stations (radius, chord, twist) plus rotor-level dimensions.

    ``twist`` is the local geometric pitch angle measured from the plane of
    rotation, so the section angle of attack is ``twist - phi``.
    """

    r: np.ndarray
    chord: np.ndarray
    twist: np.ndarray
    hub_radius: float
    tip_radius: float
    blade_count: int

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        chord = np.asarray(self.chord, dtype=float)
        twist = np.asarray(self.twist, dtype=float)
        if not (r.shape == chord.shape == twist.shape) or r.ndim != 1:
            raise ValueError("station arrays must be 1-D and the same length")
        if np.any(np.diff(r) <= 0):
            raise ValueError("stations must be sorted by strictly increasing radius")
        if r.size and (r[0] <= self.hub_radius or r[-1] >= self.tip_radius):
            raise ValueError("stations must lie strictly between hub and tip radius")
        if not 0 <= self.hub_radius < self.tip_radius:
            raise ValueError("need 0 <= hub_radius < tip_radius")
        if self.blade_count < 2:
            raise ValueError("blade_count must be at least 2")
        if np.any(chord <= 0):
            raise ValueError("chord must be positive")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "chord", chord)
        object.__setattr__(self, "twist", twist)
        object.__setattr__(self, "blade_count", int(self.blade_count))

    @property
    def diameter(self):
        return 2.0 * self.tip_radius

    @property
    def stations(self):
        return list(zip(self.r.tolist(), self.chord.tolist(), self.twist.tolist()))


@dataclass(frozen=True)
class FlowCondition:
    V_a: float
    omega: float
    rho_a: float = DEFAULT_RHO

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.rho_a > 0:
            raise ValueError("rho_a must be positive")
        if not self.V_a >= 0:
            raise ValueError("V_a must be non-negative")

    @property
    def n(self):
        """Rotational speed in rev/s."""
        return self.omega / (2.0 * math.pi)


@dataclass(frozen=True)
class SectionSolution:
    phi: float
    a: float
    a_prime: float
    W: float
    dT: float
    dQ: float
    residual: float


@dataclass(frozen=True)
class RotorPerformance:
    T: float
    Q: float
    P: float
    J: float
    C_P: float
    converged: bool


def _section_terms(phi, r, chord, twist, B, hub_radius, tip_radius, polar):
    """Force coefficients, loss factor and the induction helpers k, kp."""
    sphi = np.sin(phi)
    cphi = np.cos(phi)
    cl, cd = polar.evaluate(twist - phi)
    cn = cl * cphi - cd * sphi
    ct = cl * sphi + cd * cphi
    ftip = 0.5 * B * (tip_radius - r) / (r * sphi)
    fhub = 0.5 * B * (r - hub_radius) / (hub_radius * sphi) if hub_radius > 0 else np.inf
    F = (2.0 / math.pi) ** 2 * np.arccos(np.exp(-ftip)) * np.arccos(np.exp(-fhub))
    F = np.maximum(F, LOSS_FLOOR)
    sigma = B * chord / (2.0 * math.pi * r)
    k = sigma * cn / (4.0 * F * sphi * sphi)
    # kp * cos(phi), finite at phi = pi/2
    kp_cos = sigma * ct / (4.0 * F * sphi)
    return k, kp_cos, cn, ct


def section_residual(phi, r, chord, twist, B, hub_radius, tip_radius, polar, speed_ratio):
    """Residual ``sin(phi)/(1 + a) - (V_a/(omega r)) cos(phi)/(1 - a')``.

    Written as ``sin(phi)(1 - k) - lam (cos(phi) + kp cos(phi))`` using
    ``1 + a = 1/(1 - k)`` and ``1 - a' = 1/(1 + kp)``, which stays finite at
    zero inflow and at ``phi = pi/2``. ``speed_ratio`` is ``V_a/(omega r)``.
    """
    k, kp_cos, _, _ = _section_terms(phi, r, chord, twist, B, hub_radius, tip_radius, polar)
    return np.sin(phi) * (1.0 - k) - speed_ratio * (np.cos(phi) + kp_cos)


def _bisect_phi(r, chord, twist, B, hub_radius, tip_radius, polar, speed_ratio):
    """Vectorised bisection; each element follows the scalar algorithm exactly."""
    args = (r, chord, twist, B, hub_radius, tip_radius, polar, speed_ratio)
    lo = np.full(np.shape(r), PHI_MIN)
    hi = np.full(np.shape(r), PHI_MAX)
    r_lo = section_residual(lo, *args)
    r_hi = section_residual(hi, *args)
    bracketed = np.sign(r_lo) * np.sign(r_hi) <= 0
    phi = np.where(r_lo == 0, lo, hi)
    res = np.where(r_lo == 0, r_lo, r_hi)
    active = bracketed & (res != 0)
    for _ in range(MAX_BISECTIONS):
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        r_mid = section_residual(mid, *args)
        phi = np.where(active, mid, phi)
        res = np.where(active, r_mid, res)
        left = active & (np.sign(r_mid) == np.sign(r_lo))
        lo = np.where(left, mid, lo)
        r_lo = np.where(left, r_mid, r_lo)
        hi = np.where(active & ~left, mid, hi)
        # keep halving past the required tolerance while the interval allows it
        active = active & (r_mid != 0) & (hi - lo > 4 * np.finfo(float).eps * hi)
    converged = bracketed & (np.abs(res) <= RESIDUAL_TOL)
    return phi, res, converged


def _loads(phi, r, chord, twist, B, hub_radius, tip_radius, polar, flow):
    k, kp_cos, cn, ct = _section_terms(phi, r, chord, twist, B, hub_radius, tip_radius, polar)
    sphi, cphi = np.sin(phi), np.cos(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = k / (1.0 - k)
        kp = kp_cos / cphi
        a_prime = kp / (1.0 + kp)
    # W = omega r (1 - a') / cos(phi), written to stay finite at phi = pi/2
    W = flow.omega * r / (cphi + kp_cos)
    q = 0.5 * flow.rho_a * W * W * chord
    return a, a_prime, W, q * cn, q * ct * r


def solve_section(geom, polar, flow, r):
    """Solve one blade element at radius ``r`` (per-blade loads)."""
    if not geom.hub_radius < r < geom.tip_radius:
        raise ValueError("r must lie strictly between hub and tip radius")
    chord = float(np.interp(r, geom.r, geom.chord))
    twist = float(np.interp(r, geom.r, geom.twist))
    B = geom.blade_count
    speed_ratio = flow.V_a / (flow.omega * r)
    phi, res, ok = _bisect_phi(np.float64(r), chord, twist, B, geom.hub_radius,
                               geom.tip_radius, polar, speed_ratio)
    if not ok:
        raise NoBracket(flow, r)
    a, a_prime, W, dT, dQ = _loads(phi, r, chord, twist, B, geom.hub_radius,
                                   geom.tip_radius, polar, flow)
    return SectionSolution(phi=float(phi), a=float(a), a_prime=float(a_prime), W=float(W),
                           dT=float(dT), dQ=float(dQ), residual=float(res))


def solve_sections(geom, polar, flow):
    """Inflow angle, residual and convergence flag at every blade station."""
    speed_ratio = flow.V_a / (flow.omega * geom.r)
    return _bisect_phi(geom.r, geom.chord, geom.twist, geom.blade_count, geom.hub_radius,
                       geom.tip_radius, polar, speed_ratio)


def solve_rotor(geom, polar, flow):
    """Integrate section loads over the supplied stations.

    A section that fails to bracket does not raise; the result is returned
    with ``converged=False`` and that section contributes no load.
    """
    if geom.r.size < 10:
        raise ValueError("solve_rotor needs at least 10 blade stations")
    r = geom.r
    phi, _, ok = solve_sections(geom, polar, flow)
    _, _, _, dT, dQ = _loads(phi, r, geom.chord, geom.twist, geom.blade_count,
                             geom.hub_radius, geom.tip_radius, polar, flow)
    dT = np.where(ok, dT, 0.0)
    dQ = np.where(ok, dQ, 0.0)
    T = geom.blade_count * float(np.trapezoid(dT, r))
    Q = geom.blade_count * float(np.trapezoid(dQ, r))
    P = Q * flow.omega
    D = geom.diameter
    J = float(advance_ratio(flow.V_a, flow.omega, D))
    C_P = float(power_coefficient(P, flow.omega, flow.rho_a, D))
    converged = bool(ok.all())
    if not converged:
        log.debug("rotor solve at V_a=%g, omega=%g: %d sections failed",
                  flow.V_a, flow.omega, int((~ok).sum()))
    return RotorPerformance(T=T, Q=Q, P=P, J=J, C_P=C_P, converged=converged)


@dataclass
class Dataset:
    """Column table produced by :func:`generate_dataset`."""

    v_a: np.ndarray
    omega: np.ndarray
    power: np.ndarray
    j: np.ndarray
    c_p: np.ndarray
    converged: np.ndarray
    rho_a: float = DEFAULT_RHO
    diameter: float = float("nan")

    def __len__(self):
        return len(self.v_a)

    def subset(self, mask):
        return Dataset(self.v_a[mask], self.omega[mask], self.power[mask], self.j[mask],
                       self.c_p[mask], self.converged[mask], self.rho_a, self.diameter)


def generate_dataset(geom, polar, v_range=(0.0, 30.0, 31), omega_range=None, rho_a=DEFAULT_RHO):
    """Solve the rotor on the Cartesian grid of freestream speed and rotation rate.

    Ranges are ``(start, stop, count)`` triples; ``omega_range`` is in rad/s
    and defaults to 1000-10000 rpm. Points that fail to converge stay in the
    table with ``converged`` false.
    """
    if omega_range is None:
        omega_range = (1000.0 * RPM_TO_RAD_S, 10000.0 * RPM_TO_RAD_S, 37)
    v_values = _grid_axis(v_range)
    omega_values = _grid_axis(omega_range)
    rows = []
    for v in v_values:
        for w in omega_values:
            perf = solve_rotor(geom, polar, FlowCondition(float(v), float(w), rho_a))
            rows.append((v, w, perf.P, perf.J, perf.C_P, perf.converged))
    v_a, omega, power, j, c_p, conv = (np.array(col) for col in zip(*rows))
    return Dataset(v_a.astype(float), omega.astype(float), power.astype(float),
                   j.astype(float), c_p.astype(float), conv.astype(bool), rho_a, geom.diameter)


def _grid_axis(axis):
    start, stop, count = axis
    count = int(count)
    if count < 1:
        raise ValueError("grid axis needs at least one point")
    if count == 1:
        if start != stop:
            raise ValueError("a single-point axis needs start == stop")
        return np.array([float(start)])
    return np.linspace(float(start), float(stop), count)


# ---------------------------------------------------------------------------
# file formats


def load_geometry(path):
    """Read a geometry file.

    Format::

        diameter_m = 0.2286
        hub_radius_m = 0.0125
        blade_count = 2
        [stations]
        # r_m  chord_m  twist_deg
        0.015  0.019  38.0
        ...
    """
    keys = {}
    rows = []
    in_table = False
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower() == "[stations]":
            in_table = True
            continue
        if in_table:
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: station rows need r_m chord_m twist_deg")
            rows.append([float(p) for p in parts])
        else:
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            keys[key] = value
    missing = {"diameter_m", "hub_radius_m", "blade_count"} - keys.keys()
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    if not rows:
        raise ValueError(f"{path}: no stations table")
    table = np.array(rows)
    return BladeGeometry(r=table[:, 0], chord=table[:, 1], twist=np.radians(table[:, 2]),
                         hub_radius=float(keys["hub_radius_m"]),
                         tip_radius=0.5 * float(keys["diameter_m"]),
                         blade_count=int(keys["blade_count"]))


def load_polar(path):
    """Read a three-column ``alpha_deg cl cd`` table; ``#`` starts a comment."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: polar file needs 3 columns (alpha_deg, cl, cd)")
    return AirfoilPolar(np.radians(data[:, 0]), data[:, 1], data[:, 2])


def write_dataset_csv(dataset, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_HEADER)
        for row in zip(dataset.v_a, dataset.omega, dataset.power, dataset.j, dataset.c_p,
                       dataset.converged):
            writer.writerow([repr(float(x)) for x in row[:5]] + [int(bool(row[5]))])
    tmp.replace(path)


def read_dataset_csv(path, rho_a=DEFAULT_RHO, diameter=float("nan")):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != DATASET_HEADER:
            raise ValueError(f"{path}: expected header {','.join(DATASET_HEADER)}")
        rows = [r for r in reader if r]
    if not rows:
        empty = np.array([], dtype=float)
        return Dataset(empty, empty, empty, empty, empty, np.array([], dtype=bool), rho_a, diameter)
    cols = list(zip(*rows))
    num = [np.array(c, dtype=float) for c in cols[:5]]
    conv = np.array([c.strip() in ("1", "true", "True") for c in cols[5]])
    return Dataset(*num, conv, rho_a, diameter)
