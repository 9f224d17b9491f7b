import argparse
import io
import json
from pathlib import Path

import pytest

from quantum_averaging.cli import EXIT_IO, EXIT_STARVED, EXIT_USAGE, build_parser, main

GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def theory_json(*argv):
    code, out, _ = run("theory", "--format", "json", *argv)
    assert code == 0
    return json.loads(out)


# -- theory ---------------------------------------------------------------------


def test_theory_fig4b_inputs():
    d = theory_json("--v", "0.62,1.83")
    assert d["V_A"] == pytest.approx(1.225, rel=1e-12)
    assert d["V_H"] == pytest.approx(0.9262, abs=5e-5)
    assert d["V_schur"] == pytest.approx(d["V_H"], rel=1e-12)
    assert d["V_H"] <= d["V_G"] <= d["V_A"]
    # trigger port of the phased two-port network is -(x1 + x2)/sqrt(2)
    assert d["gain_1"] == pytest.approx((1.83 - 0.62) / 2.45, rel=1e-12)


def test_theory_worked_example():
    d = theory_json("--v", "4,0.25,0.25,0.25,0.25")
    assert d["V_A"] == pytest.approx(1.0, rel=1e-10)
    assert d["V_H"] == pytest.approx(0.3077, abs=5e-5)
    assert len([k for k in d if k.startswith("gain_")]) == 4


def test_theory_single_input():
    d = theory_json("--v", "1")
    assert d["V_A"] == d["V_H"] == 1.0


def test_theory_correlated_and_text_output():
    d = theory_json("--v", "1.95,3.72", "--c", "1.0")
    assert d["V_Ac"] == pytest.approx(1.835) and d["V_Hc"] == pytest.approx(1.630769230769231)
    code, out, _ = run("theory", "--v", "0.62,1.83")
    assert code == 0 and "V_A = 1.225" in out


def test_theory_csv_to_out(tmp_path):
    code, out, _ = run("theory", "--v", "0.64,0.9", "--format", "csv", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "theory.csv").read_text() == out


@pytest.mark.parametrize("argv", [
    ("theory",),
    ("theory", "--v", "1,-2"),
    ("theory", "--v", "abc"),
    ("theory", "--v", "1,2,3", "--c", "0.1"),
    ("theory", "--v", "1,1", "--c", "1.0"),
])
def test_theory_usage_errors(argv):
    assert run(*argv)[0] == EXIT_USAGE


# -- run ------------------------------------------------------------------------


def run_json(*argv):
    code, out, err = run("run", "--format", "json", *argv)
    assert code == 0, err
    return json.loads(out)


def test_run_heralded_ps_010():
    d = run_json("--protocol", "harmonic-heralded", "--v", "0.62,1.83", "--ps", "0.10", "--n", "60000", "--seed", "7")
    assert d["var_analytic"] == pytest.approx(0.9278, abs=1e-4)
    assert abs(d["var_empirical"] - d["var_analytic"]) <= 4 * d["var_stderr"]
    assert d["ps_analytic"] == pytest.approx(0.10, rel=1e-10)
    assert d["ps_ci_lo"] <= 0.10 + 0.005 and d["ps_ci_hi"] >= 0.10 - 0.005


def test_run_arithmetic_interference():
    d = run_json("--protocol", "arithmetic-interference", "--v", "0.64,0.90", "--n", "60000", "--seed", "7")
    assert abs(d["var_empirical"] - 0.77) <= 3 * d["var_stderr"]
    assert d["ps_empirical"] == 1.0


def test_run_feedforward_equal_inputs():
    d = run_json("--protocol", "harmonic-feedforward", "--v", "0.8,0.8", "--n", "50000", "--seed", "1")
    assert d["var_analytic"] == pytest.approx(0.8, rel=1e-12)
    assert abs(d["var_empirical"] - 0.8) <= 4 * d["var_stderr"]
    assert d["ps_empirical"] == 1.0 and d["kept"] == d["total"] == 50000


def test_run_arithmetic_pick():
    d = run_json("--protocol", "arithmetic-pick", "--v", "4,4,0.25,0.25,0.25", "--n", "100000", "--seed", "3")
    assert abs(d["var_empirical"] - 1.75) <= 4 * d["var_stderr"]


def test_run_starved_exit_code(tmp_path):
    code, out, err = run("run", "--protocol", "harmonic-heralded", "--v", "0.62,1.83",
                         "--threshold", "1e-9", "--n", "1000", "--out", str(tmp_path / "o"))
    assert code == EXIT_STARVED
    assert "P_S" in err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("argv", [
    ("--v", "0.62,1.83"),
    ("--protocol", "harmonic-heralded"),
    ("--protocol", "bogus", "--v", "1,1"),
    ("--protocol", "harmonic-heralded", "--v", "1,1", "--ps", "1.5"),
    ("--protocol", "harmonic-heralded", "--v", "1,1", "--ps", "0.1", "--threshold", "1"),
    ("--protocol", "harmonic-heralded", "--v", "1,1,1", "--ps", "0.1"),
    ("--protocol", "harmonic-heralded", "--v", "1,1", "--threshold", "-1"),
    ("--protocol", "arithmetic-interference", "--v", "1,1", "--threshold", "1"),
    ("--protocol", "arithmetic-interference", "--v", "1"),
    ("--protocol", "arithmetic-interference", "--v", "1,1", "--n", "1"),
    ("--protocol", "arithmetic-interference", "--v", "1,1", "--seed", "-3"),
])
def test_run_validation_errors_write_nothing(tmp_path, argv):
    out = tmp_path / "o"
    assert run("run", *argv, "--out", str(out))[0] == EXIT_USAGE
    assert not out.exists()


def test_run_writes_csv_and_manifest(tmp_path):
    code, _, _ = run("run", "--protocol", "arithmetic-interference", "--v", "1,2", "--n", "2000",
                     "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "run.csv").read_text().startswith("figure,protocol,n,")
    assert json.loads((tmp_path / "run.json").read_text())["args"]["seed"] == 0


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run("theory", "--v", "1,2", "--out", str(blocker / "sub"))
    assert code == EXIT_IO and "I/O error" in err


# -- config ---------------------------------------------------------------------


def test_config_supplies_flags_and_command_line_wins(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("protocol = arithmetic-interference\nv = 0.64,0.90\nn = 3000\nseed = 5\nformat = csv\n")
    code, from_file, _ = run("run", "--config", str(cfg))
    assert code == 0
    _, explicit, _ = run("run", "--protocol", "arithmetic-interference", "--v", "0.64,0.90", "--n", "3000",
                         "--seed", "5", "--format", "csv")
    assert from_file == explicit
    _, overridden, _ = run("run", "--config", str(cfg), "--seed", "6")
    assert overridden != from_file and overridden.rstrip().endswith(",6")


@pytest.mark.parametrize("text", ["bogus = 1\n", "n = many\n", "protocol = nope\n", "[[broken\n"])
def test_bad_config_is_usage_error(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert run("run", "--config", str(cfg))[0] == EXIT_USAGE


def test_missing_config_is_usage_error(tmp_path):
    assert run("theory", "--config", str(tmp_path / "none.cfg"))[0] == EXIT_USAGE


# -- figure -----------------------------------------------------------------------


def test_figure_fig2_rows():
    code, out, _ = run("figure", "fig2")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    five_one = {r[1]: float(r[10]) for r in rows if r[0] == "fig2a" and r[2] == "5"}
    assert five_one["arithmetic-mean"] == pytest.approx(1.0)
    assert five_one["harmonic-mean"] == pytest.approx(0.3077, abs=5e-5)
    five_two = {r[1]: float(r[10]) for r in rows if r[0] == "fig2b" and r[3].count("4.0") == 2}
    assert five_two["arithmetic-mean"] == pytest.approx(1.75)
    assert five_two["harmonic-mean"] == pytest.approx(0.40)


def test_figure_fig4b_crossing(tmp_path):
    grid = ",".join(f"{x:.3f}" for x in [0.5 + 0.01 * i for i in range(31)])
    code, out, _ = run("figure", "fig4b", "--seed", "11", "--n", "2000", "--ps-grid", grid, "--out", str(tmp_path))
    assert code == 0
    line = next(s for s in out.splitlines() if s.startswith("variance=1 crossing"))
    assert abs(float(line.rsplit("~", 1)[1]) - 0.64) <= 0.02
    assert (tmp_path / "fig4b.csv").exists() and (tmp_path / "fig4b.json").exists()


def test_figure_fig5_c0_feedforward_column():
    code, out, _ = run("figure", "fig5", "--c", "0", "--n", "2000", "--ps-grid", "0.1,1", "--format", "json")
    assert code == 0
    recs = json.loads(out)
    ff = [r for r in recs if r["protocol"] == "harmonic-feedforward"]
    assert ff and ff[0]["var_analytic"] == pytest.approx(2.5587, abs=1e-4)


def test_plot_needs_out():
    assert run("figure", "fig2", "--plot")[0] == EXIT_USAGE


def test_figure_plot(tmp_path):
    code, out, _ = run("figure", "fig2", "--out", str(tmp_path), "--plot")
    assert code == 0 and (tmp_path / "fig2.png").stat().st_size > 0


@pytest.mark.parametrize("argv", [
    ("fig9",),
    ("fig4a", "--ps-grid", "0.5,0.1"),
    ("fig4a", "--n", "10"),
    ("fig4a", "--c", "0,0.1"),
    ("fig5", "--c", "5"),
    ("fig4a", "--workers", "0"),
    ("fig2", "--v", "1,2,3"),
])
def test_figure_validation_errors_write_nothing(tmp_path, argv):
    out = tmp_path / "o"
    assert run("figure", *argv, "--out", str(out))[0] == EXIT_USAGE
    assert not out.exists()


# -- determinism ------------------------------------------------------------------


@pytest.mark.parametrize("argv", [
    ("figure", "fig4a", "--n", "2000", "--ps-grid", "0.05,0.2,1", "--seed", "3", "--workers", "3"),
    ("run", "--protocol", "harmonic-heralded", "--v", "0.62,1.83", "--ps", "0.2", "--n", "5000", "--format", "csv"),
])
def test_same_command_line_same_bytes(tmp_path, argv):
    a = run(*argv, "--out", str(tmp_path / "a"))
    b = run(*argv, "--out", str(tmp_path / "b"))
    assert a[0] == b[0] == 0
    for f in (tmp_path / "a").glob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


# -- help ------------------------------------------------------------------------


def _subparsers(parser):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices


HELP_CASES = [(), ("theory",), ("run",), ("figure",)]


@pytest.mark.parametrize("cmd", HELP_CASES, ids=lambda c: c[0] if c else "top")
def test_help_matches_golden(cmd, capsys):
    assert main([*cmd, "--help"]) == 0
    text = capsys.readouterr().out
    name = "_".join(("qavg",) + cmd) + ".txt"
    assert text == (GOLDEN / name).read_text()


@pytest.mark.parametrize("cmd", ["theory", "run", "figure"])
def test_help_lists_every_flag(cmd):
    sub = _subparsers(build_parser())[cmd]
    text = sub.format_help()
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
    for flag in ("--seed", "--out", "--format", "--config", "--plot"):
        assert flag in text
