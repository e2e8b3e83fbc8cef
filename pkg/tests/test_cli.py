import csv
import json
import subprocess
import sys

import pytest

from xxzness import __version__
from xxzness.cli import EXIT_CHECK, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main

pytestmark = pytest.mark.filterwarnings("ignore::xxzness.trajectory.ConvergenceWarning")

TINY = ["--steps", "300", "--burn-in", "30", "--trajectories", "2", "-q"]


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_version(capsys):
    assert main(["version"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == __version__


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "xxzness", "version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == __version__


def test_run_preset_both_formats(tmp_path):
    out = tmp_path / "zeno"
    assert main(["run", "--preset", "zeno", "--out", str(out), "--format", "both", "-q"]) == EXIT_OK
    rows = read_rows(tmp_path / "zeno.csv")
    doc = json.loads((tmp_path / "zeno.json").read_text())
    assert len(rows) == len(doc["points"]) == 36
    assert doc["config"]["preset"] == "zeno"


def test_sweep_to_stdout(capsys):
    assert main(["sweep", "--n-sites", "4", "--mu", "0.2,0.6", "--delta", "2", *TINY]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3 and lines[0].startswith("N,J_x,J_z,Delta")


def test_config_precedence(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("preset: custom\nn_sites: 5\nmu: [0.2, 0.4]\nsteps: 500\nburn_in: 50\ntrajectories: 2\nseed: 7\n")
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(cfg), "--steps", "300", "--out", str(out), "-q"]) == EXIT_OK
    rows = read_rows(out)
    assert [r["mu_R"] for r in rows] == ["0.6", "0.7"]
    assert {r["steps"] for r in rows} == {"300"}  # command line beats file
    assert {r["seed"] for r in rows} == {"7"}  # file beats preset default
    assert {r["N"] for r in rows} == {"5"}


def test_preset_from_file(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("preset: zeno\n")
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out), "-q"]) == EXIT_OK
    assert {r["preset"] for r in read_rows(out)} == {"zeno"}


@pytest.mark.parametrize("argv", [
    ["run", "--preset", "fig9"],
    ["run", "--bogus"],
    ["sweep", "-q"],
    ["sweep", "--mu", "0.5,0.3", "-q"],
    ["sweep", "--mu", "x", "-q"],
    ["sweep", "--mu", "0.3", "--steps", "10", "--burn-in", "10", "-q"],
    ["sweep", "--mu", "0.3", "--format", "both", "-q"],
    ["run", "--seed", "-1"],
    [],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        code = main(argv)
        raise SystemExit(code)
    assert exc.value.code == EXIT_USAGE


def test_io_errors(tmp_path):
    assert main(["sweep", "--n-sites", "4", "--out", str(tmp_path / "no" / "x.csv"), *TINY]) == EXIT_IO
    assert main(["run", "--config", str(tmp_path / "missing.yaml"), "-q"]) == EXIT_IO


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("- just\n- a list\n")
    assert main(["run", "--config", str(cfg), "-q"]) == EXIT_USAGE
    cfg.write_text("mu: [0.3\n")
    assert main(["run", "--config", str(cfg), "-q"]) == EXIT_USAGE


def test_numerical_failure():
    # vanishing hopping: the steady state is no longer unique
    assert main(["sweep", "--solver", "exact", "--n-sites", "4", "--delta", "1e9", "-q"]) == EXIT_NUMERICAL


def test_check_verb(capsys):
    assert main(["check", "-q"]) == EXIT_OK
    assert "checks passed" in capsys.readouterr().out
    assert main(["check", "-q", "--inject-fault", "hopping"]) == EXIT_CHECK
    assert "small-tau current coefficient" in capsys.readouterr().err
