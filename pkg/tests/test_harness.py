import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from mrbsde.cli import main
from mrbsde.errors import DegenerateInput, OracleUnavailable
from mrbsde.harness import (
    cmd_chaos,
    cmd_solve,
    fit_rate,
    linear_trend,
    master_seed,
    rep_seed,
    run_validation,
    select_oracle,
)
from mrbsde.model import ChaosSettings, load_document


def load(fixtures, name):
    return json.loads((fixtures / name).read_text())


def write_doc(path, doc):
    path.write_text(json.dumps(doc))
    return path


# --- rate fits -------------------------------------------------------------

def test_fit_rate_exact_halving():
    fit = fit_rate([1, 2, 4], [1.0, 0.5, 0.25])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)


def test_fit_rate_constant():
    assert fit_rate([1, 2, 4, 8], [0.3] * 4).slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_noisy():
    # closed-form least squares over log2 N = 0..3
    fit = fit_rate([1, 2, 4, 8], [1.0, 0.51, 0.26, 0.125])
    x = np.arange(4.0)
    y = np.log2([1.0, 0.51, 0.26, 0.125])
    ols = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
    assert fit.slope == pytest.approx(ols, abs=1e-12)
    assert abs(fit.slope + 1) <= 0.03


def test_fit_rate_degenerate():
    with pytest.raises(DegenerateInput):
        fit_rate([1, 2, 4], [1.0, 0.0, 0.25])
    with pytest.raises(DegenerateInput):
        fit_rate([1], [1.0])
    with pytest.warns(RuntimeWarning):
        fit = fit_rate([1, 2, 4], [1.0, 0.0, 0.25], floor=0.25)
    assert np.isfinite(fit.slope)


def test_linear_trend():
    fit = linear_trend([0.0, 1.0, 2.0], [1.0, 3.0, 5.0])
    assert (fit.slope, fit.intercept, fit.r2) == pytest.approx((2.0, 1.0, 1.0))


# --- seeds -----------------------------------------------------------------

def test_master_seed_override(monkeypatch):
    monkeypatch.delenv("MRBSDE_SEED", raising=False)
    assert master_seed(5) == 5
    monkeypatch.setenv("MRBSDE_SEED", "18446744073709551615")
    assert master_seed(5) == 2**64 - 1
    monkeypatch.setenv("MRBSDE_SEED", "-1")
    with pytest.raises(ValueError):
        master_seed(5)


def test_rep_seeds_are_distinct_and_stable():
    seeds = [rep_seed(11, r) for r in range(64)]
    assert len(set(seeds)) == 64
    assert seeds == [rep_seed(11, r) for r in range(64)]
    assert rep_seed(12, 0) != seeds[0]


# --- solve command ---------------------------------------------------------

def test_solve_demo(fixtures, tmp_path):
    summary = cmd_solve(fixtures / "demo.json", tmp_path)
    assert summary["constraint_min"] >= -summary["constraint_tolerance"]
    assert "runtime_s" not in summary
    assert (tmp_path / "solution.csv").exists()
    assert json.loads((tmp_path / "summary.json").read_text()) == summary


def test_solve_is_byte_identical(fixtures, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["solve", "--config", str(fixtures / "tree_demo.json"), "--out", str(out),
                     "--particles"]) == 0
    for name in ("solution.csv", "particles.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_solve_timing_flag(fixtures, tmp_path):
    summary = cmd_solve(fixtures / "tree_demo.json", tmp_path, timing=True)
    assert summary["runtime_s"] >= 0


def test_solve_seed_override(fixtures, tmp_path, monkeypatch):
    base = cmd_solve(fixtures / "demo.json", tmp_path / "a")
    monkeypatch.setenv("MRBSDE_SEED", "7")
    other = cmd_solve(fixtures / "demo.json", tmp_path / "b")
    assert other["seed"] == 7
    assert other["Y0_mean"] != base["Y0_mean"]


@pytest.mark.parametrize("a", [0.0, -1.0])
def test_solve_bad_slope_exit_code(fixtures, tmp_path, capsys, a):
    doc = load(fixtures, "demo.json")
    doc["model"]["constraint"] = {"name": "affine", "a": a, "b": 0.0}
    cfg = write_doc(tmp_path / "bad.json", doc)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 2
    err = json.loads(capsys.readouterr().out)
    assert err["error"] == "BadLipschitzBounds"
    assert not (tmp_path / "out" / "summary.json").exists()


def test_solve_unreadable_config(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().out)["error"] == "FileNotFoundError"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().out)["error"] == "ParseError"


def test_console_entry_point(fixtures, tmp_path):
    out = subprocess.run([sys.executable, "-m", "mrbsde.cli", "solve", "--config",
                          str(fixtures / "tree_demo.json"), "--out", str(tmp_path)],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["condexp"] == "tree"


# --- chaos command ---------------------------------------------------------

def small_chaos(fixtures, tmp_path, name, M=10):
    doc = load(fixtures, name)
    doc["solver"]["M"] = M
    return write_doc(tmp_path / name, doc)


def test_chaos_report_reproducible(fixtures, tmp_path):
    cfg = small_chaos(fixtures, tmp_path, "chaos_smooth.json")
    args = dict(n_list=[50, 100, 200, 400], reps=3)
    r1 = cmd_chaos(cfg, tmp_path / "a", **args)
    r2 = cmd_chaos(cfg, tmp_path / "b", **args)
    assert r1.to_json() == r2.to_json()
    for name in ("report.json", "chaos.csv", "rate_err_Y.dat", "rate_bound.dat", "oracle.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "rate_err_Y.dat").read_text().split("\n")
    assert rows[0].split()[0] == "50" and len(rows) == 5
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["N_list"] == [50, 100, 200, 400]
    assert set(report["fits"]) == {"err_Y", "err_K", "err_Z", "bound_vs_logN"}
    assert all(p[k] >= 0 for p in report["points"] for k in ("err_Y", "err_K", "err_Z"))


def test_chaos_seed_override_changes_report(fixtures, tmp_path, monkeypatch):
    cfg = small_chaos(fixtures, tmp_path, "chaos_smooth.json", M=5)
    args = dict(n_list=[50, 100, 200, 400], reps=2)
    base = cmd_chaos(cfg, tmp_path / "a", **args)
    monkeypatch.setenv("MRBSDE_SEED", "99")
    other = cmd_chaos(cfg, tmp_path / "b", **args)
    assert other.seed == 99 and base.points != other.points


def test_linear_model_reflection_rate(fixtures, tmp_path):
    # K^(N)_T = (mean xi - 1)^- has mean square of order 1/N
    cfg = small_chaos(fixtures, tmp_path, "linear_closed_form.json", M=5)
    report = cmd_chaos(cfg, tmp_path / "out", n_list=[250, 500, 1000, 2000, 4000], reps=16)
    assert report.oracle["kind"] == "closed_form"
    assert report.fits["err_K"]["slope"] <= -0.4


def test_chaos_cli_rejects_short_sweep(fixtures, tmp_path, capsys):
    code = main(["chaos", "--config", str(fixtures / "chaos_smooth.json"), "--out", str(tmp_path),
                 "--n", "100,200,400", "--reps", "2"])
    assert code == 2
    assert json.loads(capsys.readouterr().out)["error"] == "ConfigError"


def test_oracle_selection(fixtures):
    model, cfg, chaos = load_document((fixtures / "chaos_z_driver.json").read_text())
    with pytest.raises(OracleUnavailable):
        select_oracle(model, cfg, ChaosSettings(oracle="limit"))
    model, cfg, _ = load_document((fixtures / "demo.json").read_text())
    ref, lim = select_oracle(model, cfg, ChaosSettings(oracle="auto"))
    assert ref.provenance["kind"] == "limit" and lim is not None


# --- validation ------------------------------------------------------------

def test_validate_reflection_only(capsys):
    assert main(["validate", "--suite", "reflection"]) == 0
    out = capsys.readouterr().out
    assert "reflection/properties[linear]" in out
    assert "solver/" not in out and "oracle/" not in out


def test_validate_all_shipped(capsys):
    checks = run_validation("all")
    assert all(c.passed for c in checks)
    assert {c.suite for c in checks} == {"reflection", "solver", "oracle"}


def test_validate_corrupted_golden(fixtures, tmp_path, capsys):
    for p in fixtures.glob("golden_*.json"):
        shutil.copy(p, tmp_path / p.name)
    doc = json.loads((tmp_path / "golden_tree_n1_m1.json").read_text())
    doc["Y"][0][0][0] += 1e-6
    (tmp_path / "golden_tree_n1_m1.json").write_text(json.dumps(doc))
    code = main(["validate", "--suite", "oracle", "--fixtures", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL  oracle/golden[golden_tree_n1_m1.json]" in out


def test_validate_unreadable_golden(tmp_path, capsys):
    (tmp_path / "golden_broken.json").write_text("[]")
    assert main(["validate", "--suite", "oracle", "--fixtures", str(tmp_path)]) == 1
    assert "golden[golden_broken.json]" in capsys.readouterr().out


def test_validate_unknown_suite(capsys):
    assert main(["validate", "--suite", "everything"]) == 2
    assert json.loads(capsys.readouterr().out)["error"] == "ValueError"
