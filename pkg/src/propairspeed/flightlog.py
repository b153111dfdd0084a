"""Flight log CSV ingestion, export and airspeed reference computation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .models import REFERENCE_LEVER_ARM, pitot_correction

log = logging.getLogger(__name__)

FLIGHT_HEADER = ("t_s", "voltage_v", "current_a", "omega_rad_s", "v_pitot_mps",
                 "omega_x_rad_s", "theta_rad", "psi_rad", "v_n_mps", "v_e_mps", "v_d_mps",
                 "rho_kg_m3")

# canonical column -> FlightLog attribute
ATTRIBUTE = {
    "t_s": "t", "voltage_v": "V", "current_a": "I", "omega_rad_s": "omega",
    "v_pitot_mps": "V_pitot", "omega_x_rad_s": "Omega_x", "theta_rad": "theta",
    "psi_rad": "psi", "v_n_mps": "V_N", "v_e_mps": "V_E", "v_d_mps": "V_D",
    "rho_kg_m3": "rho_a",
}
REQUIRED = ("t_s", "voltage_v", "current_a", "omega_rad_s", "theta_rad", "psi_rad",
            "v_n_mps", "v_e_mps", "v_d_mps")
OPTIONAL = ("v_pitot_mps", "omega_x_rad_s", "rho_kg_m3")

# unit name -> factor to the canonical unit, per quantity kind
_UNITS = {
    "angular_rate": {"rad_s": 1.0, "rpm": 2.0 * math.pi / 60.0, "rev_s": 2.0 * math.pi,
                     "hz": 2.0 * math.pi, "deg_s": math.pi / 180.0},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0},
    "speed": {"mps": 1.0, "kmh": 1.0 / 3.6, "kt": 1852.0 / 3600.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "voltage": {"v": 1.0, "mv": 1e-3},
    "current": {"a": 1.0, "ma": 1e-3},
    "density": {"kg_m3": 1.0},
}
_KIND = {
    "t_s": "time", "voltage_v": "voltage", "current_a": "current", "omega_rad_s": "angular_rate",
    "v_pitot_mps": "speed", "omega_x_rad_s": "angular_rate", "theta_rad": "angle",
    "psi_rad": "angle", "v_n_mps": "speed", "v_e_mps": "speed", "v_d_mps": "speed",
    "rho_kg_m3": "density",
}


class SchemaMismatch(ValueError):
    pass


class UnitUnknown(ValueError):
    pass


class MissingPitot(ValueError):
    pass


@dataclass
class UnitConfig:
    """Maps foreign column names and units onto the canonical schema.

    ``columns`` maps a canonical column (e.g. ``omega_rad_s``) to the name used
    in the file (e.g. ``omega_rpm``); ``units`` maps a canonical column to the
    unit the file uses (e.g. ``rpm``). ``smoothing_window`` > 1 applies a
    centred moving average to omega, voltage and current.
    """

    columns: dict = field(default_factory=dict)
    units: dict = field(default_factory=dict)
    smoothing_window: int = 1

    def factor(self, canonical):
        unit = self.units.get(canonical)
        if unit is None:
            return 1.0
        table = _UNITS[_KIND[canonical]]
        try:
            return table[unit.lower()]
        except KeyError:
            raise UnitUnknown(f"unknown unit {unit!r} for {canonical}; "
                              f"expected one of {sorted(table)}") from None

    @classmethod
    def from_mapping(cls, mapping):
        """Build from flat ``<canonical>_column`` / ``<canonical>_unit`` keys."""
        columns, units, window = {}, {}, 1
        for key, value in mapping.items():
            if key == "smoothing_window":
                window = int(value)
            elif key.endswith("_column"):
                columns[key[: -len("_column")]] = value
            elif key.endswith("_unit"):
                units[key[: -len("_unit")]] = value
            else:
                raise SchemaMismatch(f"unknown ingest option {key!r}")
        unknown = (set(columns) | set(units)) - set(FLIGHT_HEADER)
        if unknown:
            raise SchemaMismatch(f"unknown canonical columns {sorted(unknown)}")
        return cls(columns, units, window)


@dataclass
class FlightLog:
    """Columnar flight log in SI units (angles in rad, omega in rad/s)."""

    t: np.ndarray
    V: np.ndarray
    I: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    V_N: np.ndarray
    V_E: np.ndarray
    V_D: np.ndarray
    V_pitot: np.ndarray = None
    Omega_x: np.ndarray = None
    rho_a: np.ndarray = None

    def __post_init__(self):
        n = len(self.t)
        for f in fields(self):
            value = getattr(self, f.name)
            value = np.full(n, np.nan) if value is None else np.asarray(value, dtype=float)
            if value.shape != (n,):
                raise ValueError(f"column {f.name} has length {value.shape}, expected {n}")
            setattr(self, f.name, value)

    def __len__(self):
        return len(self.t)

    @property
    def P_in(self):
        return self.V * self.I

    @property
    def V_ned(self):
        return np.column_stack([self.V_N, self.V_E, self.V_D])

    def subset(self, mask):
        return FlightLog(**{f.name: getattr(self, f.name)[mask] for f in fields(self)})

    def density(self, default):
        return np.where(np.isfinite(self.rho_a), self.rho_a, default)


@dataclass
class IngestReport:
    n_read: int
    n_dropped: int

    @property
    def n_kept(self):
        return self.n_read - self.n_dropped


def _parse(value):
    value = value.strip()
    if not value:
        return math.nan
    try:
        return float(value)
    except ValueError:
        return math.nan


def moving_average(x, window):
    if window <= 1 or len(x) == 0:
        return x
    kernel = np.ones(window)
    num = np.convolve(x, kernel, mode="same")
    den = np.convolve(np.ones_like(x), kernel, mode="same")
    return num / den


def ingest_flight_csv(path, unit_config=None):
    """Read a flight log CSV into a :class:`FlightLog`.

    Rows with a non-finite value in any required column are dropped and
    counted in the returned :class:`IngestReport`.
    """
    cfg = unit_config or UnitConfig()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        rows = [r for r in reader if any(c.strip() for c in r)]
    index = {name: i for i, name in enumerate(header)}
    source = {c: cfg.columns.get(c, c) for c in FLIGHT_HEADER}
    missing = [source[c] for c in REQUIRED if source[c] not in index]
    if missing:
        raise SchemaMismatch(f"{path}: missing required columns {missing}")
    factors = {c: cfg.factor(c) for c in FLIGHT_HEADER}

    data = {}
    for c in FLIGHT_HEADER:
        if source[c] in index:
            i = index[source[c]]
            col = np.array([_parse(r[i]) if i < len(r) else math.nan for r in rows], dtype=float)
            data[c] = col * factors[c] if factors[c] != 1.0 else col
        else:
            data[c] = np.full(len(rows), np.nan)

    keep = np.ones(len(rows), dtype=bool)
    for c in REQUIRED:
        keep &= np.isfinite(data[c])
    dropped = int((~keep).sum())
    if dropped:
        log.info("%s: dropped %d rows with missing required values", path, dropped)
    data = {c: v[keep] for c, v in data.items()}
    t = data["t_s"]
    if np.any(np.diff(t) <= 0):
        raise SchemaMismatch(f"{path}: timestamps must be strictly increasing")
    if np.any(data["omega_rad_s"] < 0):
        raise SchemaMismatch(f"{path}: negative rotational speed")
    for c in ("omega_rad_s", "voltage_v", "current_a"):
        data[c] = moving_average(data[c], cfg.smoothing_window)
    flight = FlightLog(**{ATTRIBUTE[c]: v for c, v in data.items()})
    return flight, IngestReport(n_read=len(rows), n_dropped=dropped)


def write_flight_csv(flight, path):
    """Write in the canonical schema; NaN optional values become empty cells.

    Floats are written with ``repr`` so a re-ingest is bit-exact.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    cols = [getattr(flight, ATTRIBUTE[c]) for c in FLIGHT_HEADER]
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FLIGHT_HEADER)
        for row in zip(*cols):
            writer.writerow(["" if math.isnan(x) else repr(float(x)) for x in row])
    tmp.replace(path)


def compute_airspeed_truth(flight, l=REFERENCE_LEVER_ARM):
    """Pitot airspeed corrected to the propeller location."""
    if not np.any(np.isfinite(flight.V_pitot)):
        raise MissingPitot("log has no pitot airspeed column")
    omega_x = np.where(np.isfinite(flight.Omega_x), flight.Omega_x, 0.0)
    return pitot_correction(flight.V_pitot, omega_x, l)
