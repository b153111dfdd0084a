"""INI-style run configuration."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .bem import RPM_TO_RAD_S
from .gate import GateConfig
from .models import DEFAULT_RHO, REFERENCE_LEVER_ARM, Environment

SECTIONS = ("environment", "gate", "sweep", "lasso", "ingest", "rls")

EXAMPLE = """\
[environment]
diameter_m = 0.2286
rho_kg_m3 = 1.225
lever_arm_m = 0.24
# eta = 0.87

[gate]
alpha_th_deg = 25
v_min_mps = 5
gamma_sign = 1

[sweep]
v_start_mps = 0
v_stop_mps = 30
v_count = 31
rpm_start = 1000
rpm_stop = 10000
rpm_count = 37

[lasso]
folds = 10
seed = 0
n_lambdas = 100
lambda_ratio = 1e-4

[ingest]
# omega_rad_s_column = omega_rpm
# omega_rad_s_unit = rpm
smoothing_window = 1

[rls]
lambda_f = 1.0
p0 = 1e8
"""


@dataclass
class RunConfig:
    diameter: float | None = None
    rho_a: float = DEFAULT_RHO
    lever_arm: float = REFERENCE_LEVER_ARM
    eta: float | None = None
    gate: GateConfig = field(default_factory=GateConfig)
    v_range: tuple = (0.0, 30.0, 31)
    omega_range: tuple = (1000.0 * RPM_TO_RAD_S, 10000.0 * RPM_TO_RAD_S, 37)
    folds: int = 10
    seed: int = 0
    n_lambdas: int = 100
    lambda_ratio: float = 1e-4
    ingest: dict = field(default_factory=dict)
    lambda_f: float = 1.0
    p0: float = 1e8

    def environment(self, diameter=None):
        D = diameter if diameter is not None else self.diameter
        if D is None:
            raise ValueError("propeller diameter is not configured")
        return Environment(D=D, rho_a=self.rho_a, l=self.lever_arm, eta=self.eta)


def load_config(path=None):
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        parser.read_file(fh)
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}")

    env = parser["environment"] if parser.has_section("environment") else {}
    if "diameter_m" in env:
        cfg.diameter = float(env["diameter_m"])
    cfg.rho_a = float(env.get("rho_kg_m3", cfg.rho_a))
    cfg.lever_arm = float(env.get("lever_arm_m", cfg.lever_arm))
    if "eta" in env:
        cfg.eta = float(env["eta"])

    if parser.has_section("gate"):
        g = parser["gate"]
        cfg.gate = GateConfig(alpha_th=g.getfloat("alpha_th_deg", 25.0),
                              v_min=g.getfloat("v_min_mps", 5.0),
                              gamma_sign=g.getint("gamma_sign", 1))
    if parser.has_section("sweep"):
        s = parser["sweep"]
        cfg.v_range = (s.getfloat("v_start_mps", 0.0), s.getfloat("v_stop_mps", 30.0),
                       s.getint("v_count", 31))
        cfg.omega_range = (s.getfloat("rpm_start", 1000.0) * RPM_TO_RAD_S,
                           s.getfloat("rpm_stop", 10000.0) * RPM_TO_RAD_S,
                           s.getint("rpm_count", 37))
    if parser.has_section("lasso"):
        s = parser["lasso"]
        cfg.folds = s.getint("folds", cfg.folds)
        cfg.seed = s.getint("seed", cfg.seed)
        cfg.n_lambdas = s.getint("n_lambdas", cfg.n_lambdas)
        cfg.lambda_ratio = s.getfloat("lambda_ratio", cfg.lambda_ratio)
    if parser.has_section("ingest"):
        cfg.ingest = dict(parser["ingest"])
    if parser.has_section("rls"):
        s = parser["rls"]
        cfg.lambda_f = s.getfloat("lambda_f", cfg.lambda_f)
        cfg.p0 = s.getfloat("p0", cfg.p0)
    return cfg
