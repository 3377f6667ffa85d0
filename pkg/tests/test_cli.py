import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from stablecp.cli import PER_SEED_COLUMNS, SETS_COLUMNS, TRACE_COLUMNS, fmt, main
from stablecp.config import ConfigError, load_config, parse_config

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = Path(__file__).parent / "golden"


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


COIN_50 = """
seeds = 50
methods = ["minse"]
[scenario]
kind = "coin_flip"
params = { K = 10, n_test = 200 }
[budget]
eta = 2.0
tau = 0.0
alpha = 0.1
"""


# ---------------------------------------------------------------- select


def test_select_argmin(capsys):
    code, out, _ = run_cli(capsys, "select", "--sizes", "0.2,0.5,0.9", "--gamma", "3", "--tau", "0")
    rec = json.loads(out)
    assert code == 0
    np.testing.assert_allclose(rec["p"], [1, 0, 0], atol=1e-12)
    assert rec["certificate"]["gamma"] == pytest.approx(3.0)
    assert rec["expected_size"] == pytest.approx(0.2)


def test_select_eta_zero(capsys):
    code, out, _ = run_cli(capsys, "select", "--sizes", "1,1", "--eta", "0", "--tau", "0", "--scale", "1")
    assert code == 0 and json.loads(out)["p"] == [0.5, 0.5]


def test_select_malformed_prior(capsys):
    code, out, err = run_cli(capsys, "select", "--sizes", "0.2,0.5", "--prior", "0.5,0.6", "--eta", "1")
    assert code == 2 and out == ""
    assert "prior" in err and "simplex violation" in err
    assert err.count("\n") == 1


@pytest.mark.parametrize(
    "argv, field",
    [
        (["--sizes", "0.2,x"], "sizes"),
        (["--sizes", "0.2,0.5", "--prior", "1.0"], "prior"),
        (["--sizes", "0.2,0.5", "--gamma", "0.5"], "gamma"),
        (["--sizes", "0.2,0.5", "--mechanism", "ada_minse"], "alpha_prime"),
        (["--sizes", "0.2,1.5", "--mechanism", "exponential", "--eta", "1"], "sizes"),
    ],
)
def test_select_validation_names_field(capsys, argv, field):
    code, _, err = run_cli(capsys, "select", *argv)
    assert code == 2 and f"error: {field}" in err


def test_select_ada_minse_reports_budget_split(capsys):
    code, out, _ = run_cli(
        capsys, "select", "--sizes", "0.2,0.8", "--mechanism", "ada_minse", "--alpha", "0.1", "--alpha-prime", "0.05"
    )
    rec = json.loads(out)
    assert code == 0
    assert rec["gamma_star"] == pytest.approx(2.0) and rec["tau_star"] == pytest.approx(0.0)
    np.testing.assert_allclose(rec["p"], [1, 0], atol=1e-12)


def test_select_exponential_and_laplace(capsys):
    code, out, _ = run_cli(capsys, "select", "--sizes", "0,1", "--mechanism", "exponential", "--eta", "1")
    rec = json.loads(out)
    assert code == 0
    np.testing.assert_allclose(rec["p"], [0.731058578630, 0.268941421370], atol=1e-11)
    assert rec["certificate"]["eta"] == pytest.approx(2.0)
    code, out, _ = run_cli(capsys, "select", "--sizes", "0,1", "--mechanism", "laplace", "--eta", "1", "--seed", "4")
    assert code == 0 and json.loads(out)["selected"] in (0, 1)


# ---------------------------------------------------------------- run


def test_run_coin_flip_rows_and_columns(capsys, tmp_path):
    cfg = write(tmp_path / "coin.toml", COIN_50)
    code, out, _ = run_cli(capsys, "run", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0
    lines = (tmp_path / "o" / "per_seed.csv").read_text().splitlines()
    assert len(lines) == 51
    assert lines[0] == ",".join(PER_SEED_COLUMNS)
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary == json.loads(out)
    assert summary["methods"]["minse"]["coverage"] == pytest.approx(0.9, abs=0.02)
    assert summary["methods"]["minse"]["coverage_se"] > 0


def test_run_byte_identical_and_thread_independent(capsys, tmp_path):
    cfg = write(tmp_path / "coin.toml", COIN_50)
    outs = []
    for i, threads in enumerate((1, 1, 4)):
        code, _, _ = run_cli(capsys, "run", "--config", cfg, "--out", tmp_path / f"o{i}", "--threads", threads)
        assert code == 0
        outs.append((tmp_path / f"o{i}" / "per_seed.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_run_seed_override(capsys, tmp_path):
    cfg = write(tmp_path / "coin.toml", COIN_50.replace("seeds = 50", "seeds = 3"))
    run_cli(capsys, "run", "--config", cfg, "--out", tmp_path / "o", "--seed", "100")
    rows = list(csv.DictReader((tmp_path / "o" / "per_seed.csv").open()))
    assert [r["seed"] for r in rows] == ["100", "101", "102"]


def test_golden_worst_case_config(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "run", "--config", ROOT / "configs" / "worst_case_oracle.toml", "--out", tmp_path)
    s = json.loads(out)["methods"]["minse"]
    assert code == 0
    assert s["theoretical_miscoverage"] == pytest.approx(0.45)
    assert s["miscoverage"] == pytest.approx(0.45, abs=0.01)


def test_out_dir_environment_override(capsys, tmp_path, monkeypatch):
    cfg = write(tmp_path / "coin.toml", COIN_50.replace("seeds = 50", "seeds = 2"))
    monkeypatch.setenv("STABLECP_OUT_DIR", str(tmp_path / "env_out"))
    monkeypatch.setenv("STABLECP_THREADS", "2")
    assert load_config(cfg).threads == 2
    code, _, _ = run_cli(capsys, "run", "--config", cfg)
    assert code == 0 and (tmp_path / "env_out" / "per_seed.csv").exists()


@pytest.mark.parametrize(
    "text, field",
    [
        ("bogus = 1\n" + COIN_50, "bogus"),
        (COIN_50 + "\nbogus = 1\n", "budget.bogus"),
        (COIN_50.replace("K = 10", "K = 10, kappa = 2"), "scenario.params.kappa"),
        (COIN_50.replace("eta = 2.0", "eta = -2.0"), "budget.eta"),
        (COIN_50.replace('"minse"', '"magic"'), "methods.0"),
        (COIN_50.replace("alpha = 0.1", "alpha = 0.1\nalpha_prime = 0.5"), "scenario.params"),
        (COIN_50.replace("seeds = 50", "seeds = 50\nthreads = 0"), "threads"),
        ("seeds = [", "--config"),
    ],
)
def test_config_errors_exit_2_naming_field(capsys, tmp_path, text, field):
    cfg = write(tmp_path / "bad.toml", text)
    code, out, err = run_cli(capsys, "run", "--config", cfg)
    assert code == 2 and out == ""
    assert f"error: {field}" in err and err.count("\n") == 1


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--config", tmp_path / "nope.toml")
    assert code == 2 and "--config" in err


def test_numeric_failure_exit_3_names_seed(capsys, tmp_path):
    text = """
seeds = [7]
methods = ["minse"]
[scenario]
kind = "sin_regression"
params = { K = 3, m = 20, n_aux = 0, n_train = 200, n_test = 50 }
[budget]
eta = 3.0
tau = 0.0
alpha = 0.1
"""
    code, _, err = run_cli(capsys, "run", "--config", write(tmp_path / "c.toml", text), "--out", tmp_path)
    assert code == 3
    assert "seed 7" in err and "run_seed[minse]" in err


def test_parse_config_seed_list_and_split():
    cfg = parse_config({"scenario": {"kind": "coin_flip"}, "seeds": [3, 9], "split": {"train": 0.6}})
    assert cfg.seeds == (3, 9) and cfg.split["train"] == 0.6
    with pytest.raises(ConfigError):
        parse_config({"scenario": {"kind": "coin_flip"}, "split": {"train": 0.6, "cal": 0.3, "aux": 0.2}})


# ---------------------------------------------------------------- online


def test_online_golden_trace(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "online", "--config", GOLDEN / "online_T200.toml", "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "trace.csv").read_bytes() == (GOLDEN / "online_T200_trace.csv").read_bytes()


def test_online_trace_columns_and_determinism(capsys, tmp_path):
    for d in ("a", "b"):
        run_cli(capsys, "online", "--config", GOLDEN / "online_T200.toml", "--out", tmp_path / d, "--seed", "11")
    a = (tmp_path / "a" / "trace.csv").read_bytes()
    assert a == (tmp_path / "b" / "trace.csv").read_bytes()
    rows = list(csv.reader(a.decode().splitlines()))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) == 1 + 3 * 200
    assert {r[2] for r in rows[1:]} == {"coma", "adacoma1", "adacoma2"}
    p = [float(v) for v in rows[2][7].strip("[]").split(";")]
    assert sum(p) == pytest.approx(1.0, abs=1e-9)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert set(summary["methods"]) == {"coma", "adacoma1", "adacoma2"}


def test_online_empty_stream(capsys, tmp_path):
    cfg = write(tmp_path / "t0.toml", (GOLDEN / "online_T200.toml").read_text().replace("T = 200", "T = 0"))
    code, out, _ = run_cli(capsys, "online", "--config", cfg, "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "trace.csv").read_text() == ",".join(TRACE_COLUMNS) + "\n"
    assert json.loads(out) == {"seeds": 1, "empty": True, "methods": {}}


def test_online_from_csv_stream(capsys, tmp_path):
    rng = np.random.default_rng(0)
    y = np.cumsum(rng.standard_normal(400)) * 0.1
    with (tmp_path / "stream.csv").open("w") as fh:
        fh.write("lag1,y\n")
        for a, b in zip(y[:-1], y[1:]):
            fh.write(f"{a},{b}\n")
    text = """
data = "stream.csv"
[scenario]
kind = "arma_stream"
params = { K = 2, burn_in = 50 }
[budget]
eta = 0.4
tau = 0.02
alpha = 0.1
"""
    code, out, _ = run_cli(capsys, "online", "--config", write(tmp_path / "c.toml", text), "--out", tmp_path / "o")
    assert code == 0
    rows = (tmp_path / "o" / "trace.csv").read_text().splitlines()
    assert len(rows) == 1 + 3 * (399 - 50)


# ---------------------------------------------------------------- recalibrate


def _write_dataset(path: Path, n: int, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = np.sin(X.mean(axis=1)) + 0.1 * rng.standard_normal(n)
    with path.open("w") as fh:
        fh.write("a,b,label\n")
        for row, t in zip(X, y):
            fh.write(f"{row[0]:.6f},{row[1]:.6f},{t:.6f}\n")


RECAL = """
seed = 3
data = "data.csv"
split = { train = 0.4, cal = 0.4, aux = 0.1 }
[scenario]
kind = "sin_regression"
params = { K = 2 }
[budget]
eta = 1.0
tau = 0.0
alpha = 0.2
"""


def test_recalibrate_fifty_rows(capsys, tmp_path):
    _write_dataset(tmp_path / "data.csv", 50)
    cfg = write(tmp_path / "c.toml", RECAL)
    code, out, _ = run_cli(capsys, "recalibrate", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0
    rows = list(csv.reader((tmp_path / "o" / "recalibrated.csv").open()))
    assert tuple(rows[0]) == SETS_COLUMNS
    assert len(rows) == 1 + 5
    summary = json.loads(out)
    assert summary["m"] == 20 and summary["n_test"] == 5
    assert 1 <= summary["rank"] <= 20
    for r in rows[1:]:
        lo, hi, lab, cov = float(r[3]), float(r[4]), float(r[5]), r[6]
        assert lo <= hi and cov == ("1" if lo <= lab <= hi else "0")
    # byte-identical rerun
    run_cli(capsys, "recalibrate", "--config", cfg, "--out", tmp_path / "o2")
    assert (tmp_path / "o" / "recalibrated.csv").read_bytes() == (tmp_path / "o2" / "recalibrated.csv").read_bytes()


def test_recalibrate_errors(capsys, tmp_path):
    cfg = write(tmp_path / "c.toml", RECAL)
    code, _, err = run_cli(capsys, "recalibrate", "--config", cfg)
    assert code == 2 and "error: data" in err  # file missing
    _write_dataset(tmp_path / "data.csv", 8)
    code, _, err = run_cli(capsys, "recalibrate", "--config", cfg, "--out", tmp_path)
    assert code == 2 and "error: split" in err
    (tmp_path / "data.csv").write_text("a,label\n1.0,oops\n")
    code, _, err = run_cli(capsys, "recalibrate", "--config", cfg, "--out", tmp_path)
    assert code == 2 and "error: data" in err
    code, _, err = run_cli(capsys, "recalibrate", "--config", write(tmp_path / "d.toml", RECAL.replace('data = "data.csv"', "")))
    assert code == 2 and "error: data" in err


def test_fmt_twelve_significant_digits():
    assert fmt(math.pi) == "3.14159265359"
    assert fmt(True) == "1" and fmt(np.int64(4)) == "4" and fmt(1e-20) == "1e-20"
