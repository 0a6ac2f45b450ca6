import csv
import io
import json

import pytest

from srdetect.cli import CSV_COLUMNS, main

TOY = 'family = "bernoulli"\npre = 0.5\npost = 0.75\n'
GAUSS = 'family = "gaussian_mean_shift"\npre = 0.0\npost = 1.0\n'


@pytest.fixture
def cfg(tmp_path):
    def write(text, name="run.toml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    r = list(csv.reader(io.StringIO(text)))
    assert tuple(r[0]) == CSV_COLUMNS
    return [dict(zip(CSV_COLUMNS, row)) for row in r[1:]]


def test_calibrate_toy(cfg, capsys):
    path = cfg(TOY + "B = 2\n")
    code, out, _ = run(capsys, ["calibrate", "--config", path, "--seed", "4"])
    assert code == 0
    rec = json.loads(out)
    assert {"kind", "B", "A", "arl_estimate", "std_err", "seed"} <= set(rec)
    assert 1.96 <= rec["arl_estimate"] <= 2.04
    code, again, _ = run(capsys, ["calibrate", "--config", path, "--seed", "4"])
    assert again == out


def test_usage_errors(cfg, capsys):
    assert run(capsys, ["calibrate", "--config", cfg(TOY), "--seed", "1"])[0] == 1
    assert run(capsys, ["oc", "--config", cfg(TOY), "--seed", "1"])[0] == 1
    assert run(capsys, ["oc", "--config", cfg(TOY + "threshold = 1.4\n")])[0] == 1  # no seed
    assert run(capsys, ["oc", "--config", cfg(TOY + "threshold = 1.4\nbogus = 1\n"), "--seed", "1"])[0] == 1
    assert run(capsys, ["compare", "--config", cfg(GAUSS + 'rules = ["sr"]\nB = 50\n'), "--seed", "1"])[0] == 1
    assert run(capsys, ["oc", "--config", "/nonexistent.toml", "--seed", "1"])[0] == 1
    assert run(capsys, ["oc", "--config", cfg(TOY + "threshold = 1.4\n"), "--seed", "-1"])[0] == 1
    assert run(capsys, ["verify", "--profile", "slow", "--seed", "1"])[0] == 1


def test_calibration_failure_exit_code(cfg, capsys):
    code, _, err = run(capsys, ["calibrate", "--config", cfg(TOY + "B = 2.3\nrel_tol = 0.01\n"), "--seed", "1"])
    assert code == 2 and "evaluations" in err


def test_oc_toy(cfg, capsys, tmp_path):
    out = tmp_path / "oc" / "toy.csv"
    code, _, _ = run(capsys, ["oc", "--config", cfg(TOY + "threshold = 1.4\nn_reps = 100000\n"),
                              "--seed", "2", "--out", str(out), "--threads", "64"])
    assert code == 0
    table = rows(out.read_text())
    by = {(r["metric"], r["k"]): r for r in table}
    integ = by[("integral_add", "")]
    assert abs(float(integ["estimate"]) - 2 / 3) <= 4 * float(integ["std_err"])
    st = by[("stationary_add_direct", "")]
    assert abs(float(st["estimate"]) - 1 / 3) <= 4 * float(st["std_err"])
    assert all(r["seed"] == "2" for r in table)
    assert len(integ["estimate"].replace("0.", "", 1).lstrip("0")) >= 15  # full precision
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["K_survival_below_level"] is True
    assert abs(summary["identity_residual"]) < 1e-9


def test_oc_instant_detection(cfg, capsys):
    code, out, _ = run(capsys, ["oc", "--config", cfg(TOY + "threshold = 0.4\nn_reps = 1000\n"), "--seed", "2"])
    assert code == 0
    for r in rows(out):
        if r["metric"] in ("integral_add", "integral_add_cm", "stationary_add_direct", "conditional_add"):
            assert float(r["estimate"]) == 0.0


def test_compare(cfg, capsys):
    same = cfg(GAUSS + 'rules = ["sr", "sr"]\nthresholds = [27.0, 27.0]\nB = 50\nn_reps = 20000\n')
    code, out, _ = run(capsys, ["compare", "--config", same, "--seed", "5"])
    assert code == 0
    assert all(r["estimate"] == "0" for r in rows(out) if r["metric"] == "beats_sr")
    off = cfg(GAUSS + 'rules = ["sr", "cusum"]\nthresholds = [27.0, 0.5]\nB = 50\nn_reps = 5000\n', "off.toml")
    assert run(capsys, ["compare", "--config", off, "--seed", "5"])[0] == 2


def test_multicyclic(cfg, capsys):
    code, out, _ = run(capsys, ["multicyclic", "--config", cfg(TOY + "threshold = 1.4\nnu = 20\n"), "--seed", "5"])
    assert code == 0
    table = rows(out)
    assert table[0]["metric"] == "stationary_add_direct"
    assert run(capsys, ["multicyclic", "--config", cfg(TOY + "threshold = 1.4\n"), "--seed", "5"])[0] == 1
    mix = cfg(GAUSS + "thresholds = [10.0, 40.0]\nnu = 600\nn_reps = 5000\n", "mix.toml")
    code, out, _ = run(capsys, ["multicyclic", "--config", mix, "--seed", "5"])
    assert code == 0 and any(r["metric"] == "add_mixture" for r in rows(out))


def test_verify_quick(capsys, tmp_path):
    out = tmp_path / "report.jsonl"
    code, text, _ = run(capsys, ["verify", "--profile", "quick", "--seed", "3", "--out", str(out)])
    assert code == 0
    lines = [json.loads(s) for s in text.splitlines()]
    assert [d["criterion"] for d in lines] == ["1", "4", "7", "invariants"]
    assert all(d["passed"] for d in lines)
    assert out.read_text() == text
