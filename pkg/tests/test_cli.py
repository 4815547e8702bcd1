import numpy as np
import yaml

from timfg._parallel import resolve_threads
from timfg.cli import EXIT_CONFIG, EXIT_NONCONVERGED, main
from timfg.io import fmt, read_csv

SMALL = ["--n-time", "20", "--n-space", "50", "--n-action", "12", "--threads", "1"]


def test_pia_decoupled(tmp_path):
    code = main(["pia", "--model", "decoupled", "--n-time", "40", "--n-space", "200", "--out", str(tmp_path)])
    assert code == 0
    conv = read_csv(tmp_path / "convergence.csv")
    assert [r["k"] for r in conv] == ["1", "2"]
    assert list(conv[0]) == ["k", "d_m", "d_J", "ratio", "seconds"]
    for name in ("diagonal.csv", "density.csv", "value_slice.csv", "resolved_config.yaml"):
        assert (tmp_path / name).exists()
    diag = read_csv(tmp_path / "diagonal.csv")
    assert len(diag) == 41 * 201 and list(diag[0]) == ["t", "x", "J", "DxJ"]
    dens = read_csv(tmp_path / "density.csv")
    assert list(dens[0]) == ["t", "x", "p"]
    resolved = yaml.safe_load((tmp_path / "resolved_config.yaml").read_text())
    assert resolved["model"]["name"] == "decoupled" and resolved["grid"]["n_space"] == 200


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_vanish_schedule(tmp_path):
    code = main(["vanish", "--model", "lq_mean", "--lambda0", "0.5", "--halvings", "8", *SMALL,
                 "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "vanishing.csv")
    assert len(rows) == 9
    assert [float(r["lambda"]) for r in rows] == [0.5 * 2.0**-n for n in range(9)]
    assert list(rows[0]) == ["lambda", "max_lambda_entropy", "J_gap", "m_gap", "residual", "iters"]


def test_verify_and_mc_check(tmp_path):
    assert main(["verify", *SMALL, "--out", str(tmp_path)]) == 0
    for name in ("residual.csv", "deviation.csv", "lemmas.csv", "equilibrium.csv"):
        assert read_csv(tmp_path / name)
    assert main(["mc-check", *SMALL, "--seed", "4", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "mc_report.csv")
    assert {"estimate", "stderr", "n", "seed"} <= set(rows[0]) and rows[0]["seed"] == "4"


def test_nonconvergence_exit(tmp_path):
    assert main(["pia", *SMALL, "--max-iters", "1", "--out", str(tmp_path)]) == EXIT_NONCONVERGED
    assert main(["pia", *SMALL, "--max-iters", "1", "--allow-nonconverged", "--out", str(tmp_path)]) == 0


def test_config_file_and_errors(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump({"model": {"name": "lq_mean", "params": {"coupling": 0.25}},
                                   "grid": {"n_time": 20, "n_space": 50, "n_action": 12},
                                   "solver": {"lambda": 0.4}}))
    out = tmp_path / "o"
    assert main(["pia", "--config", str(cfg), "--tol", "1e-5", "--out", str(out)]) == 0
    resolved = yaml.safe_load((out / "resolved_config.yaml").read_text())
    assert resolved["solver"]["lambda"] == 0.4 and resolved["solver"]["tol"] == 1e-5
    assert resolved["model"]["params"] == {"coupling": 0.25}

    cfg.write_text(yaml.safe_dump({"solver": {"tol": -1.0}}))
    assert main(["pia", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG
    assert "solver.tol" in capsys.readouterr().err
    assert main(["pia", "--n-time", "0", "--out", str(out)]) == EXIT_CONFIG
    assert "grid.n_time" in capsys.readouterr().err
    assert main(["pia", "--model", "nope", "--out", str(out)]) == EXIT_CONFIG
    cfg.write_text("grid: [1, 2")
    assert main(["pia", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG


def test_thread_env_fallback(monkeypatch):
    monkeypatch.setenv("TIMFG_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(np.float64(1.0)) == "1"
    assert fmt(3) == "3" and fmt(True) == "1" and fmt("x") == "x"
    assert fmt(float("nan")) == "nan"
