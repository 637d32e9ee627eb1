import csv
import subprocess
import sys

import pytest

from rarisac.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from rarisac.validate import SMALL


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text("".join(f"{k} = {v}\n" for k, v in SMALL.items()))
    return p


def test_validate_exits_zero():
    proc = subprocess.run([sys.executable, "-m", "rarisac", "validate"], capture_output=True, text=True,
                          timeout=600)
    assert proc.returncode == EXIT_OK, proc.stdout + proc.stderr
    assert "FAIL" not in proc.stdout and "checks passed" in proc.stdout


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.cfg"
    assert main(["run", "--config", str(missing)]) == EXIT_CONFIG
    assert str(missing) in capsys.readouterr().err


def test_bad_key_is_config_error(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("no_such_key = 1\n")
    assert main(["run", "--config", str(p)]) == EXIT_CONFIG
    assert "no_such_key" in capsys.readouterr().err


def test_unknown_scheme(small_cfg, capsys):
    assert main(["run", "--config", str(small_cfg), "--schemes", "proposed,magic"]) == EXIT_CONFIG
    assert "magic" in capsys.readouterr().err


def test_infeasible_scenario(tmp_path, capsys):
    p = tmp_path / "blind.cfg"
    # a single RIS element carries no information about the RIS-side angle
    p.write_text("n_tx = 4\nn_ris = 1\nn_cells = 4\nn_users = 2\nsnapshots = 16\n")
    assert main(["run", "--config", str(p)]) == EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().err


def test_run_prints_every_scheme(small_cfg, capsys):
    assert main(["run", "--config", str(small_cfg), "--seed", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("proposed", "comm_only", "bf_only", "gd"):
        assert name in out


def test_output_dir_from_environment(small_cfg, tmp_path, monkeypatch, capsys):
    out = tmp_path / "env_out"
    monkeypatch.setenv("RARISAC_OUT", str(out))
    assert main(["trace", "--config", str(small_cfg)]) == EXIT_OK
    path = out / "trace_proposed.csv"
    assert path.is_file()
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) >= 11
    F = [float(r["F"]) for r in rows]
    # the FP objective climbs overall and in most steps
    assert F[-1] > F[0]
    ups = sum(b >= a - 1e-9 * abs(a) for a, b in zip(F, F[1:]))
    assert ups >= 0.8 * (len(F) - 1)


def test_out_flag_beats_environment(small_cfg, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RARISAC_OUT", str(tmp_path / "env"))
    spec = tmp_path / "sweep.cfg"
    spec.write_text("axis = snr_db\nvalues = [10.0, 20.0]\ntrials = 1\nschemes = comm_only\n")
    assert main(["sweep", str(spec), "--config", str(small_cfg), "--out", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "sweep_snr_db.csv").is_file()
    assert (tmp_path / "flag" / "sweep_snr_db_summary.csv").is_file()
    assert (tmp_path / "flag" / "sweep_snr_db_timing.csv").is_file()
    assert not (tmp_path / "env").exists()
