import csv
import json
import os

import numpy as np
import pytest

from rwlab.cli import main
from rwlab.modelfile import ModelFileError, model_hash, parse_model, zoo_model, zoo_text


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---- model files

def test_fractions_and_floats_parse_alike():
    a = parse_model(zoo_text("E1"))
    b = parse_model(zoo_text("E1").replace("1/3, 1/3, 1/3", "0.3333333333333333, 1/3, 1/3"))
    assert np.allclose(a.kernel.p0, b.kernel.p0, atol=1e-16)


def test_unknown_field_rejected_with_line():
    with pytest.raises(ModelFileError, match=r"line 11 field 'colour'"):
        parse_model(zoo_text("E1") + "colour: red\n", "m.yaml")


@pytest.mark.parametrize("edit, pattern", [
    (("p0: [1/3, 1/3, 1/3]", "p0: [1/3, 1/3]"), r"p0.*expected 3 entries"),
    (("pi: [1/2, 1/2]", "pi: [1/2, x]"), r"pi.*\[1\].*expected a number"),
    (("  B: [-1/8, 1/4, -1/8]\n", ""), r"no row for state 'B'"),
    (("support: [[-1], [0], [1]]", "support: [[-1], [0], [1, 2]]"), r"support.*\[2\]"),
])
def test_field_diagnostics(edit, pattern):
    with pytest.raises(ModelFileError, match=pattern):
        parse_model(zoo_text("E1").replace(*edit), "m.yaml")


def test_model_hash_ignores_name_and_formatting():
    a = zoo_model("E1")
    b = parse_model(zoo_text("E1").replace("name: E1", "name: other").replace("[A, B]", "['A', 'B']"))
    assert model_hash(a) == model_hash(b)
    assert model_hash(a) != model_hash(zoo_model("E4"))


# ---- validate

def test_validate_e1(capsys):
    code, out, _ = run(capsys, "validate", "E1")
    assert code == 0
    assert out.count("PASS") == 5


def test_validate_bounds_fixture(capsys, tmp_path):
    p = write(tmp_path, "bounds.yaml", zoo_text("bad_bounds"))
    code, out, _ = run(capsys, "validate", p)
    assert code == 2
    line = next(l for l in out.splitlines() if "prob-bounds" in l)
    assert line.startswith("FAIL") and "u=(1) s=A" in line and "0.25" in line


def test_validate_truncated_file(capsys, tmp_path):
    text = zoo_text("E1")
    p = write(tmp_path, "cut.yaml", text[: text.index("c:") + 8])
    code, _, err = run(capsys, "validate", p)
    assert code == 1 and "line" in err


def test_validate_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "validate", tmp_path / "nope.yaml")
    assert code == 1 and "cannot read" in err


def test_usage_error_is_input_error(capsys):
    assert run(capsys, "simulate", "--bogus")[0] == 1
    assert run(capsys, "validate")[0] == 1


# ---- simulate

def test_simulate_rows_and_summary(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", "--model", "E1", "-M", 10, "-T", 5,
                     "--out", tmp_path, "--no-figures")
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "samples.csv", newline="")))
    assert rows[0] == ["walker_id", "Y_1"] and len(rows) == 11
    assert [r[0] for r in rows[1:]] == [str(i) for i in range(10)]
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["seeds"] == {"env_seed": 20261018, "master_seed": 1}
    assert s["model"]["hash"] == model_hash(zoo_model("E1"))
    for key in ("mean_Y_T", "covariance_Y_T_over_sqrtT", "eta2", "version"):
        assert key in s


def test_simulate_full_precision(capsys, tmp_path):
    run(capsys, "simulate", "--model", "E4", "-M", 5, "-T", 7, "--out", tmp_path, "--no-figures")
    rows = list(csv.reader(open(tmp_path / "samples.csv", newline="")))
    # Y_7 = X_7 - 7/3 is never an integer: printed to 17 significant digits
    for r in rows[1:]:
        y = float(r[1])
        assert float(format(y, ".17g")) == y and abs(y - round(y)) > 0.1


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_simulate_is_byte_deterministic(capsys, tmp_path):
    outs = []
    for i, w in enumerate((1, 8, 1)):
        d = tmp_path / f"run{i}"
        assert run(capsys, "simulate", "--model", "E1", "-M", 500, "-T", 100,
                   "--workers", w, "--out", d)[0] == 0
        outs.append(_files(d))
    assert outs[0] == outs[1] == outs[2]
    assert {"samples.csv", "summary.json", "simulate_clt.png"} <= set(outs[0])


def test_simulate_refuses_invalid_model(capsys):
    assert run(capsys, "simulate", "--model", "bad_drift", "-M", 2, "-T", 2)[0] == 2


def test_unwritable_output_is_infrastructure_error(capsys, tmp_path):
    blocker = write(tmp_path, "file", "x")
    code, _, err = run(capsys, "simulate", "-M", 2, "-T", 2, "--out", blocker / "sub")
    assert code == 3 and "not writable" in err


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_readonly_output_dir(capsys, tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    assert run(capsys, "simulate", "-M", 2, "-T", 2, "--out", d)[0] == 3


def test_bad_x0_is_input_error(capsys, tmp_path):
    assert run(capsys, "simulate", "--x0", "1,2", "-M", 2, "-T", 2, "--out", tmp_path)[0] == 1


# ---- config

def test_config_file_and_flag_override(capsys, tmp_path):
    cfg = write(tmp_path, "run.yaml", "model: E4\nM: 7\nT: 3\nseed: 5\nfigures: false\n")
    run(capsys, "simulate", "--config", cfg, "-M", 4, "--out", tmp_path / "o")
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["M"] == 4 and s["T"] == 3 and s["seeds"]["master_seed"] == 5
    assert s["model"]["name"] == "E4"


@pytest.mark.parametrize("text", ["model: E1\nwalkers: 5\n", "M: ten\n", "mode: frozen\n",
                                  "tolerances: {speed: 1}\n", "- a\n- b\n", "seed: -1\n"])
def test_config_rejections(capsys, tmp_path, text):
    cfg = write(tmp_path, "bad.yaml", text)
    assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "o")[0] == 1


def test_bad_tolerance_flag(capsys, tmp_path):
    assert run(capsys, "verify", "--tolerance", "increment", "--out", tmp_path)[0] == 1
    assert run(capsys, "verify", "--tolerance", "nope=1", "--out", tmp_path)[0] == 1
    assert run(capsys, "verify", "--tests", "validate,foo", "--out", tmp_path)[0] == 1


# ---- verify

def _report(d):
    return json.loads((d / "report.json").read_text())


def test_verify_e1_default(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--model", "E1", "--out", tmp_path)
    assert code == 0, out
    rep = _report(tmp_path)
    assert [t["id"] for t in rep["tests"]] == [
        "validate", "martingale_residual", "increment_check", "annealed_moment_identity",
        "qv_convergence", "occupation_lln", "ks_projection"]
    assert all(t["pass"] for t in rep["tests"])
    assert rep["schema"] == "rwlab.verify/1" and rep["model"]["hash"]
    assert (tmp_path / "verify_clt.png").exists()


def test_verify_e3_exact_increments(capsys, tmp_path):
    code, _, _ = run(capsys, "verify", "--model", "E3", "-M", 500, "-T", 200,
                     "--out", tmp_path, "--no-figures")
    assert code == 0
    inc = next(t for t in _report(tmp_path)["tests"] if t["id"] == "increment_check")
    assert inc["statistic"] <= 1e-14


def test_verify_unattainable_tolerance(capsys, tmp_path):
    code, _, _ = run(capsys, "verify", "--tests", "validate,covariance",
                     "--tolerance", "covariance=1e-16", "-M", 500, "-T", 100,
                     "--out", tmp_path, "--no-figures")
    assert code == 2
    assert _report(tmp_path)["tests"][1]["pass"] is False


def test_verify_invalid_model_skips_rest(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--model", "bad_pi_mean", "--out", tmp_path)
    assert code == 2
    rep = _report(tmp_path)
    assert rep["tests"][0]["pass"] is False
    assert all(t["skipped"] for t in rep["tests"][1:])


def test_verify_small_run_skips_preconditions(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "-M", 20, "-T", 50, "--out", tmp_path, "--no-figures")
    assert code == 0
    skipped = {t["id"] for t in _report(tmp_path)["tests"] if t.get("skipped")}
    assert skipped == {"qv_convergence", "occupation_lln", "ks_projection"}


def test_verify_report_is_reproducible(capsys, tmp_path):
    for d in ("a", "b"):
        run(capsys, "verify", "-M", 300, "-T", 120, "--out", tmp_path / d, "--no-figures",
            "--workers", 1 if d == "a" else 4)
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


# ---- oracle

def test_oracle_zero_horizon(capsys, tmp_path):
    assert run(capsys, "oracle", "-T", 0, "--out", tmp_path, "--no-figures")[0] == 0
    rows = (tmp_path / "oracle.csv").read_text().splitlines()
    assert rows == ["t,x_1,prob,increment_discrepancy", "0,0,1,"]


def test_oracle_ten_steps(capsys, tmp_path):
    assert run(capsys, "oracle", "-T", 10, "--out", tmp_path)[0] == 0
    rows = list(csv.DictReader(open(tmp_path / "oracle.csv", newline="")))
    gaps = [float(r["increment_discrepancy"]) for r in rows if r["t"] != "0"]
    assert gaps and max(gaps) <= 1e-12
    for t in range(11):
        mass = sum(float(r["prob"]) for r in rows if r["t"] == str(t))
        assert abs(mass - 1) <= 1e-12
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert len(doc["levels"]) == 11 and doc["cross_term_quenched"] <= 1e-10
    assert (tmp_path / "oracle_oracle.png").exists()


def test_oracle_refuses_huge_horizon(capsys, tmp_path):
    code, _, err = run(capsys, "oracle", "-T", 10**6, "--out", tmp_path)
    assert code == 2 and "refused" in err
    assert not (tmp_path / "oracle.csv").exists()


def test_oracle_two_dimensional(capsys, tmp_path):
    assert run(capsys, "oracle", "--model", "E3", "-T", 3, "--out", tmp_path, "--no-figures")[0] == 0
    header = (tmp_path / "oracle.csv").read_text().splitlines()[0]
    assert header == "t,x_1,x_2,prob,increment_discrepancy"
