import json
import subprocess
import sys

import pytest

from ucbench.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main


def _run(tmp_path, text, *extra, name="run.cfg"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / "out"
    return main(["--config", str(cfg), "--out", str(out), *extra]), out


def test_minimal_validate_weight(tmp_path):
    code, out = _run(tmp_path, "experiment = validate-weight\nweight = quadratic\n")
    assert code == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["summary"]["delta"] == 2.0
    assert rep["verdicts"] == {"weight_valid": True, "control_rejected": True}
    assert (out / "weight.csv").exists()


def test_eta_out_of_range(tmp_path, capsys):
    code, out = _run(tmp_path, "experiment = stability-run\neta = 2.5\n")
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "0 <= eta < 2" in err and "run.cfg:2" in err
    assert not out.exists()


@pytest.mark.parametrize(
    "text",
    [
        "experiment = carleman-sweep\nmetric = nope\nNr = 17\nNtheta = 32\n",
        "experiment = validate-weight\nweight = custom\nexpression = import os\n",
        "experiment = validate-weight\nNtheta = 31\n",
    ],
)
def test_input_errors_exit_one(tmp_path, text, capsys):
    code, _ = _run(tmp_path, text)
    assert code == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("error:")


def test_invalid_custom_weight_exits_two(tmp_path):
    code, out = _run(tmp_path, "experiment = validate-weight\nweight = custom\nexpression = sin(x1)\n")
    assert code == EXIT_FAILED
    assert json.loads((out / "report.json").read_text())["verdicts"]["weight_valid"] is False


def test_stokes_small_run_writes_tables(tmp_path):
    code, out = _run(tmp_path, "experiment = stokes-check\nNr = 33\nNtheta = 64\nrandom_states = 2\n")
    assert code == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["carleman.csv", "domination.csv", "plot.gp", "refinement.csv", "report.json"]


def test_sweep_csv_bytes_deterministic(tmp_path):
    text = "experiment = carleman-sweep\nNr = 17\nNtheta = 32\nfamily_count = 4\n"
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    c1, o1 = _run(tmp_path / "a", text, "--workers", "1")
    c2, o2 = _run(tmp_path / "b", text, "--workers", "3")
    assert c1 == c2 == EXIT_OK
    assert (o1 / "sweep.csv").read_bytes() == (o2 / "sweep.csv").read_bytes()
    header = (o1 / "sweep.csv").read_text().splitlines()[0]
    assert header == "gamma,s,c_emp,argmin_member,lhs_log10,rhs_log10"
    assert "plot" in (o1 / "plot.gp").read_text()


def test_seed_override(tmp_path):
    text = "experiment = interp-norms\nNr = 9\nNtheta = 16\nfamily_count = 2\n"
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    _, o1 = _run(tmp_path / "a", text)
    _, o2 = _run(tmp_path / "b", text, "--seed-override", "7")
    assert json.loads((o2 / "report.json").read_text())["config"]["seed"] == 7
    assert (o1 / "interpolation.csv").read_text() != (o2 / "interpolation.csv").read_text()


def test_bad_workers(tmp_path):
    code, _ = _run(tmp_path, "experiment = validate-weight\n", "--workers", "0")
    assert code == EXIT_CONFIG


def test_console_script_and_log_env(tmp_path):
    cfg = tmp_path / "v.cfg"
    cfg.write_text("experiment = validate-weight\n")
    proc = subprocess.run(
        [sys.executable, "-m", "ucbench.cli", "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
        env={"UCBENCH_LOG": "INFO", "PATH": ""},
    )
    assert proc.returncode == 0
    assert "validate-weight: PASS" in proc.stdout
    assert "INFO ucbench.experiments" in proc.stderr
