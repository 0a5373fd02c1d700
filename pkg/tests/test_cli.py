import json
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from maxstab import ConvergenceError, ObsCube, cli
from maxstab.cube import read_cube, write_cube
from maxstab.reports import Table

SIM = ["simulate", "--c", "0.8,0.8,1.5", "--alpha", "1,1,1", "--m", "6", "--t-len", "100"]


@pytest.fixture(scope="module")
def sim_cube(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "cube.csv"
    assert cli.main(SIM + ["--seed", "4", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def raw_cube(tmp_path_factory):
    path = tmp_path_factory.mktemp("raw") / "raw.csv"
    g = stats.gumbel_r.rvs(size=(3, 3, 60), random_state=3)
    write_cube(ObsCube(10 + 2 * g, "raw"), path)
    return path


def test_simulate_output(sim_cube):
    cube = read_cube(sim_cube)
    assert cube.margin == "frechet" and cube.values.shape == (6, 6, 100)


def test_pipeline_end_to_end(sim_cube, tmp_path):
    start = time.perf_counter()
    fit = tmp_path / "fit.json"
    rep = tmp_path / "rep.json"
    assert cli.main(["fit", "--in", str(sim_cube), "--mask", "2,2,2", "--separated",
                     "--out", str(fit)]) == 0
    assert cli.main(["test-isotropy", "--in", str(sim_cube), "--blocks", "6,6,80",
                     "--overlap", "1,1,5", "--restarts", "0", "--out", str(rep)]) == 0
    assert time.perf_counter() - start < 120
    f = json.loads(fit.read_text())
    assert f["kind"] == "fit" and len(f["theta_hat"]["c"]) == 3
    r = json.loads(rep.read_text())
    assert r["regime"] == "fixed_domain" and r["scheme"]["q"] == [1, 1, 5]
    assert set(r["hypotheses"]) == {"C2-C1", "alpha2-alpha1"}


def test_deterministic_reports(sim_cube, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"fit{i}.json"
        assert cli.main(["fit", "--in", str(sim_cube), "--mask", "1,1,1", "--restarts", "2",
                         "--seed", "9", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert cli.main(SIM[:-4] + ["--m", "3", "--t-len", "5", "--seed", "1", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"c": "1,1", "alpha": "1,1", "m": 3, "t_len": 4, "seed": 2}))
    out = tmp_path / "o.csv"
    assert cli.main(["simulate", "--config", str(cfg), "--t-len", "6", "--out", str(out)]) == 0
    assert read_cube(out).values.shape == (3, 6)


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"c": "1,1", "alpha": "1,1", "bogus": 1}))
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_unknown_command():
    assert cli.main(["frobnicate"]) == 2


def test_missing_required(tmp_path):
    assert cli.main(["fit", "--mask", "1,1,1", "--out", str(tmp_path / "x")]) == 2


def test_missing_input_is_data_error(tmp_path):
    assert cli.main(["fit", "--in", str(tmp_path / "none.csv"), "--mask", "1,1,1",
                     "--out", str(tmp_path / "x")]) == 3


def test_infeasible_mask(sim_cube, tmp_path):
    assert cli.main(["fit", "--in", str(sim_cube), "--mask", "7,1,1",
                     "--out", str(tmp_path / "x")]) == 5


def test_invalid_params_exit(tmp_path):
    assert cli.main(["simulate", "--c", "1,-1", "--alpha", "1,1", "--out",
                     str(tmp_path / "x")]) == 3


def test_numeric_exit_code(monkeypatch, tmp_path):
    def boom(cfg):
        raise ConvergenceError("no convergence")

    monkeypatch.setitem(cli.COMMANDS, "simulate", boom)
    assert cli.main(SIM + ["--out", str(tmp_path / "x")]) == 4


def test_threads_env(monkeypatch):
    monkeypatch.setenv("MAXSTAB_THREADS", "3")
    cfg = cli.resolve_config("fit", {"input": "a", "mask": "1,1,1", "out": "b"})
    assert cfg["threads"] == 3
    cfg = cli.resolve_config("fit", {"input": "a", "mask": "1,1,1", "out": "b", "threads": 2})
    assert cfg["threads"] == 2


def test_config_logged(sim_cube, tmp_path, caplog):
    with caplog.at_level("INFO", logger="maxstab"):
        cli.main(["fit", "--in", str(sim_cube), "--mask", "1,0,0", "--restarts", "0",
                  "--out", str(tmp_path / "f.json")])
    assert any('"seed": 0' in r.getMessage() for r in caplog.records)


def test_margins_and_predict(raw_cube, tmp_path):
    fits, qq, fr = tmp_path / "m.json", tmp_path / "qq.csv", tmp_path / "fr.csv"
    assert cli.main(["margins", "--in", str(raw_cube), "--out", str(fits), "--qq", str(qq),
                     "--transformed", str(fr)]) == 0
    m = json.loads(fits.read_text())
    assert np.array(m["mu"]).shape == (3, 3)
    t = Table.from_csv(qq.read_text())
    assert len(t) == 9 * 60 and t.names[:2] == ["s1", "s2"]
    assert read_cube(fr).margin == "frechet"
    field = tmp_path / "field.csv"
    assert cli.main(["predict-cond", "--margins", str(fits), "--theta", "1,1,1,1,1,1",
                     "--ref", "2,2,1", "--z", "12", "--zstar", "12", "--out", str(field)]) == 0
    f = Table.from_csv(field.read_text())
    assert len(f) == 9 and np.all((f["probability"] >= 0) & (f["probability"] <= 1))
    assert cli.main(["predict-cond", "--in", str(raw_cube), "--theta", "1,1,1,1,1,1",
                     "--ref", "2,2,1", "--z", "12", "--zstar", "12", "--out", str(field)]) == 0


def test_margins_rejects_non_raw(sim_cube, tmp_path):
    assert cli.main(["margins", "--in", str(sim_cube), "--out", str(tmp_path / "m")]) == 3


def test_check_maxstable_and_gof(sim_cube, tmp_path):
    ms = tmp_path / "ms.json"
    assert cli.main(["check-maxstable", "--in", str(sim_cube), "--k", "2,3", "--bootstrap",
                     "100", "--out", str(ms)]) == 0
    obj = json.loads(ms.read_text())
    assert [c["k"] for c in obj["checks"]] == [2, 3]
    assert len(obj["checks"][0]["qq"]["prob"]) == 200
    gof = tmp_path / "gof.csv"
    assert cli.main(["gof", "--in", str(sim_cube), "--theta", "0.8,0.8,1.5,1,1,1",
                     "--locations", "1,1;2,3", "--m-sims", "20", "--out", str(gof)]) == 0
    assert len(Table.from_csv(gof.read_text())) == 100 // 3


def test_gof_needs_theta(sim_cube, tmp_path):
    assert cli.main(["gof", "--in", str(sim_cube), "--locations", "1,1",
                     "--out", str(tmp_path / "g")]) == 2


@pytest.mark.skipif(shutil.which("maxstab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["maxstab", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "maxstab" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "maxstab.cli", "nope"], capture_output=True)
    assert proc.returncode == 2
