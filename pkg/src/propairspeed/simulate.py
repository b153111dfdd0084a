"""Synthetic flight logs generated from a known direct model and constant wind.

A log starts with a hover segment (nose up, slow climb) followed by forward
flight with a heading sweep and varying throttle. Ground velocity follows the
same kinematics the identification assumes, so the model coefficients and
wind can be recovered exactly from noiseless data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flightlog import FlightLog
from .models import REFERENCE_COEFFICIENTS, REFERENCE_ETA, REFERENCE_LEVER_ARM, DirectCoefficients


@dataclass(frozen=True)
class SimulationConfig:
    beta1: float = REFERENCE_COEFFICIENTS["flight_gps"][0]
    beta2: float = REFERENCE_COEFFICIENTS["flight_gps"][1]
    wind_n: float = 3.0
    wind_e: float = -2.0
    eta: float = REFERENCE_ETA
    lever_arm: float = REFERENCE_LEVER_ARM
    n_hover: int = 200
    n_forward: int = 2000
    dt: float = 0.1
    airspeed_mean: float = 18.0
    airspeed_amplitude: float = 5.0
    heading_turns: float = 2.0
    heading: float | None = None  # fixed heading [rad] disables the sweep
    constant_throttle: bool = False
    velocity_noise: float = 0.0
    voltage: float = 14.8
    rho_a: float = 1.225
    seed: int = 0

    def __post_init__(self):
        if not self.beta1 > 0 or not self.beta2 < 0:
            raise ValueError("simulation needs beta1 > 0 and beta2 < 0")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.n_forward < 0 or self.n_hover < 0 or self.n_forward + self.n_hover < 1:
            raise ValueError("invalid segment lengths")

    @property
    def coefficients(self):
        return DirectCoefficients(self.beta1, self.beta2)


def simulate(cfg=None):
    """Return ``(FlightLog, true_airspeed, forward_mask)``."""
    cfg = cfg or SimulationConfig()
    rng = np.random.default_rng(cfg.seed)
    nh, nf = cfg.n_hover, cfg.n_forward
    n = nh + nf
    t = np.arange(n) * cfg.dt
    s = np.linspace(0.0, 1.0, nf)

    # forward segment
    if cfg.constant_throttle:
        v_a = np.full(nf, cfg.airspeed_mean)
        excess = np.full(nf, 2.0)
    else:
        v_a = cfg.airspeed_mean + cfg.airspeed_amplitude * np.sin(2 * math.pi * 3.0 * s)
        excess = 2.0 + 1.5 * np.sin(2 * math.pi * 5.0 * s + 0.7)
    # invert the direct model: v_a = b1 omega + b2 P^2 / omega^5 with b2 < 0
    omega = (v_a + excess) / cfg.beta1
    power = np.sqrt(excess * omega**5 / -cfg.beta2)
    if cfg.heading is not None:
        psi = np.full(nf, float(cfg.heading))
    else:
        psi = np.mod(2 * math.pi * cfg.heading_turns * s, 2 * math.pi)
    gamma = 0.0 if cfg.constant_throttle else np.radians(3.0) * np.sin(2 * math.pi * 4.0 * s)
    gamma = np.broadcast_to(gamma, (nf,)).astype(float)
    alpha = np.radians(2.0) + np.radians(1.0) * np.sin(2 * math.pi * 7.0 * s)
    roll_rate = 0.1 * np.sin(2 * math.pi * 9.0 * s)

    v_n = v_a * np.cos(gamma) * np.cos(psi) + cfg.wind_n
    v_e = v_a * np.cos(gamma) * np.sin(psi) + cfg.wind_e
    # vertical speed chosen so arcsin(V_D / |V|) reproduces gamma
    v_d = np.hypot(v_n, v_e) * np.tan(gamma)

    # hover segment: nose up, slow climb, high power
    h_omega = np.full(nh, 900.0)
    h_power = np.full(nh, 120.0)
    h_vn = np.full(nh, 0.3)
    h_ve = np.full(nh, -0.2)
    h_vd = np.full(nh, -0.5)
    h_va = np.full(nh, 0.5)

    P = np.concatenate([h_power, power])
    current = P / cfg.eta / cfg.voltage
    V_N = np.concatenate([h_vn, v_n])
    V_E = np.concatenate([h_ve, v_e])
    V_D = np.concatenate([h_vd, v_d])
    if cfg.velocity_noise > 0:
        V_N = V_N + rng.normal(0.0, cfg.velocity_noise, n)
        V_E = V_E + rng.normal(0.0, cfg.velocity_noise, n)
        V_D = V_D + rng.normal(0.0, cfg.velocity_noise, n)
    truth = np.concatenate([h_va, v_a])
    omega_x = np.concatenate([np.zeros(nh), roll_rate])
    flight = FlightLog(
        t=t, V=np.full(n, cfg.voltage), I=current,
        omega=np.concatenate([h_omega, omega]),
        theta=np.concatenate([np.full(nh, 0.5 * math.pi), gamma + alpha]),
        psi=np.concatenate([np.zeros(nh), psi]),
        V_N=V_N, V_E=V_E, V_D=V_D,
        V_pitot=truth + omega_x * cfg.lever_arm, Omega_x=omega_x,
        rho_a=np.full(n, cfg.rho_a),
    )
    forward = np.concatenate([np.zeros(nh, dtype=bool), np.ones(nf, dtype=bool)])
    return flight, truth, forward
