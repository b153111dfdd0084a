"""Command line entry point: ``propairspeed <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, bem, workflow
from .config import EXAMPLE, load_config
from .flightlog import (MissingPitot, SchemaMismatch, UnitConfig, UnitUnknown,
                        compute_airspeed_truth, ingest_flight_csv, write_flight_csv)
from .gate import RankDeficient, ZeroVelocity
from .inflight import IllConditioned
from .metrics import EmptyAfterGate, evaluate
from .models import (CoefficientDocument, DegenerateFit, advance_ratio, efficiency_to_json,
                     estimate_efficiency, load_coefficients, power_coefficient)
from .simulate import SimulationConfig, simulate
from .sparse import (DegenerateColumnWarning, NonFinite, build_features_direct,
                     build_features_indirect, discover)

log = logging.getLogger("propairspeed")

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERICAL, EXIT_EMPTY = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# io helpers


def _atomic_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _write_json(path, doc):
    _atomic_text(path, json.dumps(doc, indent=2, sort_keys=False) + "\n")


def _write_csv(path, header, columns):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(x)) for x in row])
    tmp.replace(path)


def _read_columns(path, required):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaMismatch(f"{path}: missing columns {missing}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows], dtype=float) for c in required}


def _grid_diameter(ds, fallback):
    """Recover D from ``J = 2 pi V / (omega D)`` on any row with ``J > 0``."""
    ok = (ds.j > 0) & (ds.v_a > 0) & (ds.omega > 0)
    if ok.any():
        return float(np.median(2 * math.pi * ds.v_a[ok] / (ds.omega[ok] * ds.j[ok])))
    if fallback is None:
        raise SchemaMismatch("cannot infer the propeller diameter from the grid; use --diameter")
    return fallback


def _load_grid(args, cfg):
    ds = bem.read_dataset_csv(args.grid, rho_a=cfg.rho_a)
    if len(ds) == 0:
        raise EmptyAfterGate(f"{args.grid}: grid has no rows")
    D = args.diameter or cfg.diameter or _grid_diameter(ds, None)
    return bem.Dataset(ds.v_a, ds.omega, ds.power, ds.j, ds.c_p, ds.converged, ds.rho_a, D)


def _load_log(args, cfg):
    flight, report = ingest_flight_csv(args.log, UnitConfig.from_mapping(cfg.ingest))
    if report.n_dropped:
        log.warning("%s: dropped %d of %d rows", args.log, report.n_dropped, report.n_read)
    return flight


def _diameter(args, cfg, doc=None):
    if getattr(args, "diameter", None):
        return args.diameter
    if cfg.diameter:
        return cfg.diameter
    meta = (doc or {}).get("training_metadata", {})
    if meta.get("D"):
        return float(meta["D"])
    from . import load_sample_propeller

    return load_sample_propeller()[0].diameter


def _env(args, cfg, doc=None):
    env = cfg.environment(_diameter(args, cfg, doc))
    if getattr(args, "eta", None) is not None:
        from dataclasses import replace

        env = replace(env, eta=args.eta)
    return env


# ---------------------------------------------------------------------------
# subcommands


def cmd_bem_gen(args, cfg):
    if args.geometry or args.polar:
        if not (args.geometry and args.polar):
            raise SchemaMismatch("--geometry and --polar go together")
        geom, polar = bem.load_geometry(args.geometry), bem.load_polar(args.polar)
    else:
        from . import load_sample_propeller

        geom, polar = load_sample_propeller()
    ds = bem.generate_dataset(geom, polar, v_range=cfg.v_range, omega_range=cfg.omega_range,
                              rho_a=cfg.rho_a)
    bem.write_dataset_csv(ds, args.out)
    n_bad = int((~ds.converged).sum())
    log.info("wrote %d grid points (%d not converged) to %s", len(ds), n_bad, args.out)
    return EXIT_OK


def cmd_fit_eta(args, cfg):
    ds = _load_grid(args, cfg)
    branch = workflow.forward_branch(ds)
    usable = ds.converged & (ds.power > 0)
    flight = _load_log(args, cfg)
    D = ds.diameter
    truth = compute_airspeed_truth(flight, cfg.lever_arm)
    ok = (flight.omega > 0) & np.isfinite(truth) & (flight.P_in > 0)
    J = np.full(len(flight), -np.inf)
    J[ok] = advance_ratio(truth[ok], flight.omega[ok], D)
    sel = ok & (J > branch.critical.threshold)
    if not sel.any():
        raise EmptyAfterGate("no flight samples on the forward-flight branch")
    rho = flight.density(cfg.rho_a)
    cp_in = power_coefficient(flight.P_in[sel], flight.omega[sel], rho[sel], D)
    est = estimate_efficiency(ds.j[usable], ds.c_p[usable], J[sel], cp_in)
    meta = {"grid": str(args.grid), "log": str(args.log), "D": D, "n_samples": int(sel.sum()),
            "j_crit": list(branch.critical.j_crit)}
    _write_json(args.out, efficiency_to_json(est, meta))
    return EXIT_OK


def _metadata(args, ds, env_eta=None):
    return {"dataset": str(args.grid), "rho_a": ds.rho_a, "D": ds.diameter, "eta": env_eta}


def cmd_discover(args, cfg):
    ds = _load_grid(args, cfg)
    branch = workflow.forward_branch(ds)
    data, v_a = workflow.training_data(ds, branch.mask)
    if v_a.size < cfg.folds:
        raise EmptyAfterGate("too few forward-branch grid points for cross-validation")
    if args.model == "direct":
        library = build_features_direct(data["P"], data["omega"])
    else:
        library = build_features_indirect(data["C_P"], data["omega"])
    with warnings.catch_warnings():
        # rate features are identically zero on steady grids
        warnings.simplefilter("ignore", DegenerateColumnWarning)
        selected, path = discover(library, data, v_a, k=cfg.folds, seed=cfg.seed,
                                  n_lambdas=cfg.n_lambdas, ratio=cfg.lambda_ratio)
    doc = {"model": args.model, **selected.to_json(), "omega_unit": "rad_s",
           "training_metadata": {**_metadata(args, ds), "n_samples": int(v_a.size),
                                 "j_crit": list(branch.critical.j_crit), "folds": cfg.folds,
                                 "seed": cfg.seed}}
    _write_json(args.out, doc)
    print(" ".join(selected.support))
    return EXIT_OK


def cmd_fit(args, cfg):
    ds = _load_grid(args, cfg)
    branch = workflow.forward_branch(ds)
    data, v_a = workflow.training_data(ds, branch.mask)
    if args.model == "direct":
        coeffs = workflow.fit_direct(data["P"], data["omega"], v_a)
    else:
        coeffs = workflow.fit_indirect(data["C_P"], data["omega"], ds.diameter, v_a)
    meta = {**_metadata(args, ds), "n_samples": int(v_a.size),
            "j_crit": list(branch.critical.j_crit)}
    _write_json(args.out, CoefficientDocument(coeffs, meta).to_json())
    return EXIT_OK


def cmd_identify_gps(args, cfg):
    seed, seed_doc = (None, None)
    if args.seed_model:
        seed, seed_doc = load_coefficients(args.seed_model)
    env = _env(args, cfg, seed_doc)
    flight = _load_log(args, cfg)
    problem, mask = workflow.identification_problem(flight, args.model, env, cfg.gate, seed)
    if problem is None:
        raise EmptyAfterGate("no samples pass the regime gate")
    theta0 = None
    if seed is not None and seed.model == args.model:
        theta0 = np.concatenate([list(seed.as_dict().values()), [0.0, 0.0]])
    lambda_f = args.lambda_f if args.lambda_f is not None else cfg.lambda_f
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IllConditioned)
        theta, wind, diag = workflow.identify(problem, args.method, lambda_f, cfg.p0, theta0)
    for w in caught:
        log.warning("%s", w.message)
    coeffs = workflow.coefficients_from_theta(args.model, theta)
    meta = {"dataset": str(args.log), "rho_a": env.rho_a, "D": env.D, "eta": env.eta,
            "method": args.method, "gated_fraction": float(mask.mean())}
    extra = {"wind": {"V_wN": wind.V_wN, "V_wE": wind.V_wE}, "diagnostics": diag}
    _write_json(args.out, CoefficientDocument(coeffs, meta, extra).to_json())
    return EXIT_OK


def cmd_estimate(args, cfg):
    coeffs, doc = load_coefficients(args.coefficients)
    env = _env(args, cfg, doc)
    flight = _load_log(args, cfg)
    mask, v_hat = workflow.estimate(flight, coeffs, env, cfg.gate)
    _write_csv(args.out, ("t_s", "v_hat_mps"), (flight.t[mask], v_hat))
    frac = float(mask.mean()) if len(flight) else 0.0
    log.info("%d of %d rows pass the gate (%.3f)", int(mask.sum()), len(flight), frac)
    print(json.dumps({"n_rows": len(flight), "n_gated": int(mask.sum()), "gated_fraction": frac}))
    return EXIT_OK


def _truth_at(flight, cfg, times):
    truth = compute_airspeed_truth(flight, cfg.lever_arm)
    idx = np.searchsorted(flight.t, times)
    if np.any(idx >= len(flight.t)) or np.any(flight.t[np.minimum(idx, len(flight.t) - 1)] != times):
        raise SchemaMismatch("estimate timestamps do not match the log")
    return truth[idx]


def cmd_evaluate(args, cfg):
    flight = _load_log(args, cfg)
    est = _read_columns(args.estimate, ("t_s", "v_hat_mps"))
    if est["t_s"].size == 0:
        raise EmptyAfterGate("estimate file has no gated rows")
    truth = _truth_at(flight, cfg, est["t_s"])
    ok = np.isfinite(truth)
    frac = est["t_s"].size / len(flight) if len(flight) else 0.0
    report = evaluate(est["v_hat_mps"][ok], truth[ok], args.range, gated_fraction=frac)
    _write_json(args.out, report.to_json())
    print(f"rmse={report.rmse:.6g} nrmse={report.nrmse:.6g} n={report.n_samples}")
    return EXIT_OK


def cmd_export_plot(args, cfg):
    if args.kind == "cp-j":
        if not args.grid:
            raise SchemaMismatch("cp-j export needs --grid")
        ds = _load_grid(args, cfg)
        branch = workflow.forward_branch(ds)
        ok = ds.converged & (ds.power > 0)
        cols = (ds.j[ok], ds.c_p[ok], branch.cubic(ds.j[ok]), branch.mask[ok].astype(float))
        _write_csv(args.out, ("j", "c_p", "c_p_cubic", "forward_branch"), cols)
    else:
        if not (args.log and args.estimate):
            raise SchemaMismatch("airspeed export needs --log and --estimate")
        flight = _load_log(args, cfg)
        est = _read_columns(args.estimate, ("t_s", "v_hat_mps"))
        try:
            truth = compute_airspeed_truth(flight, cfg.lever_arm)
        except MissingPitot:
            truth = np.full(len(flight), np.nan)
        v_hat = np.full(len(flight), np.nan)
        idx = np.searchsorted(flight.t, est["t_s"])
        v_hat[idx] = est["v_hat_mps"]
        _write_csv(args.out, ("t_s", "v_truth_mps", "v_hat_mps"), (flight.t, truth, v_hat))
    return EXIT_OK


def cmd_simulate(args, cfg):
    sim = SimulationConfig(n_hover=args.hover, n_forward=args.samples, wind_n=args.wind[0],
                           wind_e=args.wind[1], velocity_noise=args.noise, seed=args.seed,
                           heading=None if args.heading is None else math.radians(args.heading),
                           constant_throttle=args.constant_throttle,
                           eta=args.eta if args.eta is not None else SimulationConfig.eta)
    flight, _, _ = simulate(sim)
    write_flight_csv(flight, args.out)
    return EXIT_OK


def cmd_example_config(args, cfg):
    if args.out:
        _atomic_text(args.out, EXAMPLE)
    else:
        sys.stdout.write(EXAMPLE)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="propairspeed", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("bem-gen", cmd_bem_gen, "BEM grid of (V_a, omega) -> P, J, C_P")
    sp.add_argument("--geometry")
    sp.add_argument("--polar")
    sp.add_argument("--out", required=True)

    sp = add("fit-eta", cmd_fit_eta, "efficiency from BEM grid and a pitot log")
    sp.add_argument("--grid", required=True)
    sp.add_argument("--log", required=True)
    sp.add_argument("--diameter", type=float)
    sp.add_argument("--out", required=True)

    for name, func, help_ in (("discover", cmd_discover, "sparse model selection on a BEM grid"),
                              ("fit", cmd_fit, "least-squares fit of a fixed model structure")):
        sp = add(name, func, help_)
        sp.add_argument("--grid", required=True)
        sp.add_argument("--model", choices=("direct", "indirect"), default="direct")
        sp.add_argument("--diameter", type=float)
        sp.add_argument("--out", required=True)

    sp = add("identify-gps", cmd_identify_gps, "coefficients and wind from GPS velocity")
    sp.add_argument("--log", required=True)
    sp.add_argument("--model", choices=("direct", "indirect"), default="direct")
    sp.add_argument("--method", choices=("batch", "rls"), default="batch")
    sp.add_argument("--lambda-f", type=float)
    sp.add_argument("--seed-model", help="coefficient JSON used as gate proxy and RLS prior")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--diameter", type=float)
    sp.add_argument("--out", required=True)

    sp = add("estimate", cmd_estimate, "apply a model and the regime gate to a log")
    sp.add_argument("--log", required=True)
    sp.add_argument("--coefficients", required=True)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--diameter", type=float)
    sp.add_argument("--out", required=True)

    sp = add("evaluate", cmd_evaluate, "RMSE / NRMSE of an estimate against pitot truth")
    sp.add_argument("--log", required=True)
    sp.add_argument("--estimate", required=True)
    sp.add_argument("--range", type=float, help="normalisation range override [m/s]")
    sp.add_argument("--out", required=True)

    sp = add("export-plot", cmd_export_plot, "CSV series for C_P-J or airspeed plots")
    sp.add_argument("--kind", choices=("cp-j", "airspeed"), required=True)
    sp.add_argument("--grid")
    sp.add_argument("--diameter", type=float)
    sp.add_argument("--log")
    sp.add_argument("--estimate")
    sp.add_argument("--out", required=True)

    sp = add("simulate", cmd_simulate, "synthetic flight log with known coefficients and wind")
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int, default=2000)
    sp.add_argument("--hover", type=int, default=200)
    sp.add_argument("--wind", type=float, nargs=2, default=(3.0, -2.0), metavar=("N", "E"))
    sp.add_argument("--noise", type=float, default=0.0, help="GPS velocity noise std [m/s]")
    sp.add_argument("--heading", type=float, help="fixed heading [deg]; default sweeps")
    sp.add_argument("--constant-throttle", action="store_true")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("example-config", cmd_example_config, "print a commented configuration file")
    sp.add_argument("--out")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except EmptyAfterGate as exc:
        log.error("%s", exc)
        return EXIT_EMPTY
    except (SchemaMismatch, UnitUnknown, MissingPitot, FileNotFoundError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_SCHEMA
    except (ArithmeticError, NonFinite, DegenerateFit, RankDeficient, ZeroVelocity) as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
