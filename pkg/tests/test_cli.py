import csv
import json

import numpy as np
import pytest

from propairspeed import bem
from propairspeed.cli import main


@pytest.fixture(scope="module")
def grid_csv(tmp_path_factory, bem_grid):
    path = tmp_path_factory.mktemp("grid") / "grid.csv"
    bem.write_dataset_csv(bem_grid, path)
    return path


@pytest.fixture(scope="module")
def sim_log(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "log.csv"
    assert main(["simulate", "--out", str(path)]) == 0
    return path


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_bem_gen_small_sweep(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[sweep]\nv_start_mps = 0\nv_stop_mps = 20\nv_count = 3\n"
                   "rpm_start = 3000\nrpm_stop = 6000\nrpm_count = 2\n")
    out = tmp_path / "g.csv"
    assert main(["--config", str(cfg), "bem-gen", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 6 and set(rows[0]) == set(bem.DATASET_HEADER)
    assert not (tmp_path / "g.csv.tmp").exists()


def test_discover_direct(grid_csv, tmp_path, capsys):
    out = tmp_path / "sel.json"
    assert main(["discover", "--grid", str(grid_csv), "--model", "direct", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert set(doc["support"]) == {"omega", "P2_over_omega5"}
    assert doc["omega_unit"] == "rad_s"
    assert doc["training_metadata"]["D"] == pytest.approx(0.2286, rel=1e-9)


def test_fit_and_export(grid_csv, tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit", "--grid", str(grid_csv), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["model"] == "direct" and doc["coefficients"]["beta1"] > 0
    plot = tmp_path / "cp.csv"
    assert main(["export-plot", "--kind", "cp-j", "--grid", str(grid_csv), "--out", str(plot)]) == 0
    assert set(_rows(plot)[0]) == {"j", "c_p", "c_p_cubic", "forward_branch"}


def test_end_to_end(sim_log, tmp_path):
    ident, est, ev = tmp_path / "id.json", tmp_path / "est.csv", tmp_path / "ev.json"
    assert main(["identify-gps", "--log", str(sim_log), "--eta", "0.87", "--out", str(ident)]) == 0
    assert main(["estimate", "--log", str(sim_log), "--coefficients", str(ident), "--eta", "0.87",
                 "--out", str(est)]) == 0
    assert main(["evaluate", "--log", str(sim_log), "--estimate", str(est), "--out", str(ev)]) == 0
    report = json.loads(ev.read_text())
    assert report["nrmse"] < 0.01
    assert report["gated_fraction"] == pytest.approx(2000 / 2200)
    log_t = {r["t_s"] for r in _rows(sim_log)}
    assert all(r["t_s"] in log_t for r in _rows(est))
    plot = tmp_path / "va.csv"
    assert main(["export-plot", "--kind", "airspeed", "--log", str(sim_log), "--estimate", str(est),
                 "--out", str(plot)]) == 0
    assert len(_rows(plot)) == 2200


def test_rls_method(sim_log, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["identify-gps", "--log", str(sim_log), "--out", str(a)]) == 0
    assert main(["identify-gps", "--log", str(sim_log), "--method", "rls", "--out", str(b)]) == 0
    ca, cb = (json.loads(p.read_text())["coefficients"] for p in (a, b))
    assert cb["beta1"] == pytest.approx(ca["beta1"], rel=1e-6)
    assert cb["beta2"] == pytest.approx(ca["beta2"], rel=1e-6)


def test_deterministic(sim_log, tmp_path):
    outs = []
    for name in ("x.json", "y.json"):
        assert main(["identify-gps", "--log", str(sim_log), "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_hover_only_log(tmp_path, sim_log):
    log, ident, est = tmp_path / "h.csv", tmp_path / "id.json", tmp_path / "e.csv"
    assert main(["identify-gps", "--log", str(sim_log), "--out", str(ident)]) == 0
    assert main(["simulate", "--samples", "0", "--hover", "30", "--out", str(log)]) == 0
    assert main(["estimate", "--log", str(log), "--coefficients", str(ident), "--out", str(est)]) == 0
    assert _rows(est) == []
    assert main(["evaluate", "--log", str(log), "--estimate", str(est),
                 "--out", str(tmp_path / "r.json")]) == 4
    assert main(["identify-gps", "--log", str(log), "--out", str(tmp_path / "z.json")]) == 4


def test_schema_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["identify-gps", "--log", str(bad), "--out", str(tmp_path / "o.json")]) == 2
    assert main(["identify-gps", "--log", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "o.json")]) == 2


def test_numerical_error_exit_code(tmp_path):
    grid = tmp_path / "g.csv"
    grid.write_text(",".join(bem.DATASET_HEADER) + "\n" + "1.0,100.0,1.0,0.1,0.01,1\n" * 3)
    assert main(["fit", "--grid", str(grid), "--diameter", "0.2",
                 "--out", str(tmp_path / "f.json")]) == 3


def test_single_heading_warns(tmp_path, caplog):
    log = tmp_path / "s.csv"
    assert main(["simulate", "--heading", "30", "--constant-throttle", "--hover", "0",
                 "--out", str(log)]) == 0
    out = tmp_path / "s.json"
    assert main(["identify-gps", "--log", str(log), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["diagnostics"]["ill_conditioned"]
    assert "ill-conditioned" in caplog.text


def test_fit_eta_on_synthetic_pitot_log(grid_csv, tmp_path, bem_grid, forward_grid):
    # flight log whose input power is the BEM power divided by 0.87
    ds = bem_grid
    m = forward_grid.mask & (ds.v_a > 5)
    n = int(m.sum())
    header = ["t_s", "voltage_v", "current_a", "omega_rad_s", "v_pitot_mps", "omega_x_rad_s",
              "theta_rad", "psi_rad", "v_n_mps", "v_e_mps", "v_d_mps", "rho_kg_m3"]
    rows = [[i, 10.0, p / 0.87 / 10.0, w, v, 0.0, 0.0, 0.0, v, 0.0, 0.0, ds.rho_a]
            for i, (p, w, v) in enumerate(zip(ds.power[m], ds.omega[m], ds.v_a[m]))]
    log = tmp_path / "pitot.csv"
    log.write_text(",".join(header) + "\n" + "".join(",".join(repr(float(x)) for x in r) + "\n" for r in rows))
    out = tmp_path / "eta.json"
    assert main(["fit-eta", "--grid", str(grid_csv), "--log", str(log), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["metadata"]["n_samples"] == n
    assert doc["eta"] == pytest.approx(0.87, rel=0.05)


def test_example_config(capsys):
    assert main(["example-config"]) == 0
    assert "[environment]" in capsys.readouterr().out
