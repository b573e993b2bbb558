import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from oracles import brute_force_optimum

from mfgac import cli
from mfgac.datasets import make_m1, make_m2, make_m2_tensor, make_oscillating
from mfgac.meanfield import brute_force_mfe
from mfgac.model import MFGModel, save_model

MODELS = Path(__file__).resolve().parent.parent / "models"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(argv, capsys):
    code, out, err = run(argv, capsys)
    return code, (json.loads(out) if out.strip() else None), err


@pytest.fixture
def write_model(tmp_path):
    def _write(model, name="model.json"):
        path = tmp_path / name
        save_model(model, path)
        return path

    return _write


# -- validate ----------------------------------------------------------------

def test_validate_ok(capsys):
    code, doc, _ = run_json(["validate", MODELS / "m1.json"], capsys)
    assert code == 0
    assert doc["passed"] and doc["minorization"]["passed"] and doc["drift"]["passed"]
    assert doc["meta"]["command"] == "validate"


def test_validate_bad_row_names_path(tmp_path, capsys):
    doc = make_m1().to_dict()
    doc["kernel"]["p0"][1][0] = [0.3, 0.6]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, out, err = run(["validate", path], capsys)
    assert code == 2
    assert "kernel.p0[1][0]" in err
    assert out == ""


def test_validate_missing_file(tmp_path, capsys):
    code, _, err = run(["validate", tmp_path / "nope.json"], capsys)
    assert code == 2 and err


def test_validate_minorization_failure(write_model, capsys):
    p0 = [[[0.5, 0.5]], [[0.5, 0.5]]]
    model = MFGModel(p0=p0, c0=[[1.0], [1.0]], lam=[0.6, 0.3], alpha=0.9, w=[1, 1])
    code, doc, _ = run_json(["validate", write_model(model)], capsys)
    assert code == 1
    assert not doc["passed"]
    assert doc["minorization"]["witness"]["y"] == 0
    assert doc["suggested_lambda_mass"] == pytest.approx(1.0)


def test_validate_near_boundary_passes(write_model, capsys):
    base = make_m1()
    row_min = base.p0.min(axis=(0, 1))
    model = MFGModel(p0=base.p0, c0=base.c0, lam=0.99 * row_min, alpha=0.99, w=[1, 1])
    code, doc, _ = run_json(["validate", write_model(model)], capsys)
    assert code == 0
    assert doc["minorization"]["worst_margin"] == pytest.approx(0.01 * row_min.min(), abs=1e-15)


def test_validate_drift_failure(write_model, capsys):
    base = make_m1()
    model = MFGModel(p0=base.p0, c0=base.c0, lam=base.lam, alpha=0.5, w=base.w)
    code, doc, _ = run_json(["validate", write_model(model)], capsys)
    assert code == 1
    assert not doc["drift"]["passed"]
    assert doc["min_feasible_alpha"] == pytest.approx(0.69)


def test_solve_refuses_failed_assumptions(write_model, capsys):
    base = make_m1()
    model = MFGModel(p0=base.p0, c0=base.c0, lam=base.lam, alpha=0.5, w=base.w)
    code, out, err = run(["solve-acoe", write_model(model)], capsys)
    assert code == 1 and "drift" in err and out == ""


# -- solve-acoe --------------------------------------------------------------

def test_solve_acoe(capsys):
    model = make_m1()
    code, doc, _ = run_json(["solve-acoe", MODELS / "m1.json", "--mu", "0.5,0.5",
                             "--acoe-tol", "1e-12"], capsys)
    assert code == 0
    best, argmins, _ = brute_force_optimum(model, np.array([0.5, 0.5]))
    assert doc["rho"] == pytest.approx(best, abs=1e-9)
    assert tuple(doc["policy"]) in argmins
    assert doc["residual"] <= 1e-12


@pytest.mark.parametrize("mu", ["0.5", "a,b", "0.7,0.7"])
def test_solve_acoe_bad_mu(mu, capsys):
    code, _, err = run(["solve-acoe", MODELS / "m1.json", "--mu", mu], capsys)
    assert code == 2 and err


def test_solve_acoe_iteration_cap(capsys):
    code, _, err = run(["solve-acoe", MODELS / "m1.json", "--max-iter-acoe", "2"], capsys)
    assert code == 3 and "convergence" in err


def test_bad_flag_value_is_input_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["solve-mfe", str(MODELS / "m2.json"), "--theta", "1.5"])
    assert exc.value.code == 2


# -- solve-mfe ---------------------------------------------------------------

def test_solve_mfe_matches_brute_force(capsys):
    code, doc, _ = run_json(["solve-mfe", MODELS / "m2.json"], capsys)
    assert code == 0 and doc["converged"]
    oracle = brute_force_mfe(make_m2())
    assert min(np.abs(np.array(doc["mu_star"]) - o.mu_star).sum() for o in oracle) <= 1e-6
    for key in ("consistency_residual", "optimality_gap", "b_mass_defect"):
        assert doc["certificate"][key] <= 1e-6


def test_solve_mfe_full_policy_and_trace(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code, doc, _ = run_json(["solve-mfe", MODELS / "m2_tensor.json", "--full-policy",
                             "--trace-csv", trace], capsys)
    assert code == 0
    assert np.array(doc["policy"]).shape == (3, 2)
    rows = list(csv.DictReader(trace.open()))
    assert rows and rows[0]["iteration"] == "0"


def test_solve_mfe_nonconvergence(write_model, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code, doc, _ = run_json(["solve-mfe", write_model(make_oscillating()), "--theta", "1",
                             "--max-iter", "30", "--trace-csv", trace], capsys)
    assert code == 3
    assert not doc["converged"]
    assert doc["best"] is not None
    assert len(doc["trace"]) == 4
    assert len(list(csv.DictReader(trace.open()))) == 31


# -- eps-nash ----------------------------------------------------------------

def test_eps_nash_decoupled_is_zero(capsys):
    code, doc, _ = run_json(["eps-nash", MODELS / "m1.json", "--N", "2,5,50",
                             "--samples", "200"], capsys)
    assert code == 0
    for row in doc["rows"]:
        assert row["eps_paper"] == 0.0 and row["gap_exact"] == 0.0 and row["verdict"]


def test_eps_nash_m2_tensor(capsys):
    code, doc, _ = run_json(["eps-nash", MODELS / "m2_tensor.json", "--N", "5,10,50,200"],
                            capsys)
    assert code == 0 and doc["verdict"]
    assert [r["N"] for r in doc["rows"]] == [5, 10, 50, 200]
    eps = [r["eps_paper"] for r in doc["rows"]]
    assert eps == sorted(eps, reverse=True)


def test_eps_nash_csv(capsys):
    code, out, _ = run(["eps-nash", MODELS / "m2_tensor.json", "--N", "5,50",
                        "--samples", "500", "--csv", "-", "--out", "/dev/null"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["N"] for r in rows] == ["5", "50"]
    assert set(rows[0]) == {"N", "eps_paper", "eps_tight", "stderr", "gap_exact", "verdict"}


def test_eps_nash_coupled_kernel_unsupported(capsys):
    code, out, err = run(["eps-nash", MODELS / "m2.json"], capsys)
    assert code == 4 and "kappa" in err and out == ""


def test_eps_nash_rejects_n_one(capsys):
    code, _, _ = run(["eps-nash", MODELS / "m2_tensor.json", "--N", "1,5"], capsys)
    assert code == 2


def test_eps_nash_policy_flag(capsys):
    code, doc, _ = run_json(["eps-nash", MODELS / "m2_tensor.json", "--N", "5",
                             "--samples", "200", "--policy", "1,1,0"], capsys)
    assert code == 0 and doc["policy"] == [1, 1, 0]
    code, _, _ = run(["eps-nash", MODELS / "m2_tensor.json", "--policy", "1,2,0"], capsys)
    assert code == 2


# -- simulate ----------------------------------------------------------------

def test_simulate(tmp_path, capsys):
    trace = tmp_path / "sim.csv"
    code, doc, _ = run_json(["simulate", MODELS / "m2_tensor.json", "--N", "10", "--T", "2000",
                             "--trace-csv", trace], capsys)
    assert code == 0
    assert len(doc["avg_cost_per_agent"]) == 10
    assert doc["burn_in"] == 200
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["t", "tv_to_mu_ref", "running_avg_cost_agent1"]
    assert len(rows) == 2001


def test_simulate_bad_burn_in(capsys):
    code, _, _ = run(["simulate", MODELS / "m1.json", "--T", "10", "--burn-in", "10",
                      "--policy", "0,1"], capsys)
    assert code == 2


# -- reproducibility ---------------------------------------------------------

EPS_ARGS = ["eps-nash", MODELS / "m2_tensor.json", "--N", "5,10", "--samples", "2000",
            "--no-meta"]
SIM_ARGS = ["simulate", MODELS / "m2_tensor.json", "--N", "8", "--T", "1000", "--no-meta"]


@pytest.mark.parametrize("argv", [EPS_ARGS, SIM_ARGS], ids=["eps-nash", "simulate"])
def test_no_meta_byte_identical(argv, capsys):
    outputs = [run(argv + ["--threads", t], capsys)[1] for t in ("1", "1", "4")]
    assert outputs[0] == outputs[1] == outputs[2]
    assert "meta" not in json.loads(outputs[0])


def test_seed_env_override(monkeypatch, capsys):
    base = run(SIM_ARGS, capsys)[1]
    monkeypatch.setenv(cli.SEED_ENV, "7")
    env = run(SIM_ARGS, capsys)[1]
    flag = run(SIM_ARGS + ["--seed", "7"], capsys)[1]
    assert json.loads(env)["seed"] == 7
    assert env == flag != base
    # an explicit flag beats the environment
    assert run(SIM_ARGS + ["--seed", "0"], capsys)[1] == base


def test_out_flag(tmp_path, capsys):
    target = tmp_path / "out.json"
    code, out, _ = run(["validate", MODELS / "m1.json", "--out", target], capsys)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["passed"]


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "mfgac.cli", "validate", str(MODELS / "m2_tensor.json"),
         "--no-meta"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"]


def test_shipped_models_match_generators():
    from mfgac.model import load_model

    for name, make in (("m1", make_m1), ("m2", make_m2), ("m2_tensor", make_m2_tensor)):
        loaded, built = load_model(MODELS / f"{name}.json"), make()
        np.testing.assert_array_equal(loaded.p0, built.p0)
        np.testing.assert_array_equal(loaded.c0, built.c0)
