import json

import pytest

from physchan import cli
from physchan.experiments import CSV_COLUMNS

FAST = ["--realizations", "1", "--trials", "2", "--set", "experiment.p=1-3", "--set", "experiment.psnr_db=10,20",
        "--set", "scenario.tx_rows=4", "--set", "scenario.tx_cols=4", "--set", "generator.paths_min=10",
        "--set", "generator.paths_max=12", "--set", "experiment.n_t=16"]


def test_fig1_writes_csv_and_svg(tmp_path, capsys):
    out = tmp_path / "f1.csv"
    assert cli.main(["fig1", *FAST, "--out", str(out), "--svg"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 2 * 3 * 2
    svg = tmp_path / "f1.svg"
    assert svg.read_text().lstrip().startswith("<?xml")


@pytest.mark.parametrize("command", ["fig2", "fig3", "sweep"])
def test_other_commands(tmp_path, command):
    out = tmp_path / f"{command}.csv"
    args = [command, *FAST, "--out", str(out)]
    if command == "fig2":
        args += ["--set", "experiment.n_t=4,16"]
    assert cli.main(args) == 0
    assert out.exists()


def test_config_file_and_flag_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[experiment]\ntrials = 3\nseed = 5\n[output]\nout = %s\n" % (tmp_path / "from_file.csv"))
    out = tmp_path / "flag.csv"
    assert cli.main(["fig3", "--config", str(ini), *FAST, "--out", str(out)]) == 0
    assert out.exists() and not (tmp_path / "from_file.csv").exists()


def test_error_line_and_exit_code(tmp_path, capsys):
    assert cli.main(["fig1", "--trials", "0", "--out", str(tmp_path / "x.csv")]) != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "invalid-argument"
    assert cli.main(["sweep", "--set", "experiment.estimators=", "--out", str(tmp_path / "y.csv")]) != 0
    assert cli.main(["fig1", "--set", "badkey", "--out", str(tmp_path / "z.csv")]) != 0
    assert cli.main(["fig1", "--config", str(tmp_path / "missing.ini")]) != 0


def test_validate_bounds_quick(capsys):
    assert cli.main(["validate-bounds", "--quick"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert all(line.startswith("PASS") for line in lines)
    assert any("lemma1" in line for line in lines)


def test_plot_is_reproducible(tmp_path):
    from physchan.experiments import TradeoffRecord
    from physchan.plotting import plot_records

    rows = [TradeoffRecord("oracle", p, 20.0, 0.1 / p + 0.01 * p, 0.1 / p, 0.01 * p, 0.9, 1, 0) for p in (1, 2, 3)]
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    plot_records(rows, a)
    plot_records(rows, b)
    assert a.read_bytes() == b.read_bytes()
