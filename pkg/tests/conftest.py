import math

import numpy as np
import pytest

import propairspeed
from propairspeed import bem, workflow
from propairspeed.inflight import build_rows_direct, build_rows_indirect


@pytest.fixture(scope="session")
def sample_propeller():
    return propairspeed.load_sample_propeller()


@pytest.fixture(scope="session")
def bem_grid(sample_propeller):
    geom, polar = sample_propeller
    return bem.generate_dataset(geom, polar)


@pytest.fixture(scope="session")
def forward_grid(bem_grid):
    return workflow.forward_branch(bem_grid)


def forward_flight(n=400, beta=(2.55e-2, -6.85e11), wind=(3.0, -2.0), heading_span=2 * math.pi,
                   noise=0.0, seed=0, constant=False):
    """Direct-model kinematics with known truth: returns (P, omega, gamma, psi, V_N, V_E, v_a)."""
    rng = np.random.default_rng(seed)
    b1, b2 = beta
    if constant:
        v_a = np.full(n, 18.0)
        excess = np.full(n, 2.0)
        psi = np.full(n, 0.4)
        gamma = np.zeros(n)
    else:
        v_a = rng.uniform(12.0, 25.0, n)
        excess = rng.uniform(0.5, 4.0, n)
        psi = np.linspace(0.0, heading_span, n, endpoint=False)
        gamma = rng.uniform(-0.05, 0.05, n)
    omega = (v_a + excess) / b1
    P = np.sqrt(excess * omega**5 / -b2)
    V_N = v_a * np.cos(gamma) * np.cos(psi) + wind[0] + noise * rng.standard_normal(n)
    V_E = v_a * np.cos(gamma) * np.sin(psi) + wind[1] + noise * rng.standard_normal(n)
    return P, omega, gamma, psi, V_N, V_E, v_a


@pytest.fixture
def direct_problem():
    P, omega, gamma, psi, V_N, V_E, _ = forward_flight()
    return build_rows_direct(P, omega, gamma, psi, V_N, V_E)


def indirect_flight(n=400, alpha=(0.85, -3.9, -4.7e3), wind=(-1.5, 2.5), D=0.2286, seed=1):
    rng = np.random.default_rng(seed)
    cp = rng.uniform(0.005, 0.05, n)
    omega = rng.uniform(500.0, 1000.0, n)
    J = alpha[0] + alpha[1] * cp + alpha[2] * cp**4
    v_a = omega / (2 * math.pi) * D * J
    psi = rng.uniform(0, 2 * math.pi, n)
    gamma = rng.uniform(-0.05, 0.05, n)
    V_N = v_a * np.cos(gamma) * np.cos(psi) + wind[0]
    V_E = v_a * np.cos(gamma) * np.sin(psi) + wind[1]
    return build_rows_indirect(cp, omega, D, gamma, psi, V_N, V_E)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
