import csv
import io
import json
import math
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qszasz.cli import HEADERS, format_cell, main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


COMMANDS = {
    "weights": ["weights", "--q", "2", "--n", "2", "--x", "0.5"],
    "eval": ["eval", "--q", "2", "--n", "3", "--x", "1", "2.5", "--f", "sin"],
    "moments": ["moments", "--q", "1.5", "--n", "3", "--x", "0.5", "2", "--mmax", "4"],
    "central-moments": ["central-moments", "--q", "2", "--n", "2", "--x", "1", "--rmax", "5"],
    "stirling": ["stirling", "--q", "1.5", "--mmax", "5"],
    "converge": ["converge", "--q", "2", "--f", "mono:2", "--p", "2", "--nmin", "1", "--nmax", "4", "--count", "51"],
    "voronovskaja": ["voronovskaja", "--q", "2", "--f", "mono:3", "--x", "1.5", "--nmin", "1", "--nmax", "4"],
    "modulus": ["modulus", "--f", "expneg", "--delta", "0.1", "0.2", "--count", "101"],
    "steklov": ["steklov", "--f", "invsq", "--h", "0.2", "--count", "101"],
    "bound-check": ["bound-check", "--mode", "local", "--q", "2", "--f", "mono:2", "--nmin", "1", "--nmax", "3", "--count", "51"],
    "diagnose-positivity": ["diagnose-positivity", "--q", "2", "--n", "1", "--xmax", "4", "--count", "5"],
}


@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_headers_and_csv_json_equality(name, capsys):
    code, out_csv, _ = run(COMMANDS[name], capsys)
    assert code == 0
    assert out_csv.splitlines()[0] == ",".join(HEADERS[name])
    assert out_csv.endswith("\n") and "\r" not in out_csv
    code, out_json, _ = run(COMMANDS[name] + ["--json"], capsys)
    assert code == 0
    rows_csv = parse_csv(out_csv)
    rows_json = json.loads(out_json)
    assert len(rows_csv) == len(rows_json) > 0
    for a, b in zip(rows_csv, rows_json):
        assert list(b) == list(HEADERS[name])
        for key in HEADERS[name]:
            if b[key] is None:
                assert a[key] in ("nan", "inf", "-inf")
            elif isinstance(b[key], str):
                assert a[key] == b[key]
            else:
                assert float(a[key]) == b[key]


@pytest.mark.parametrize("name", ["eval", "converge", "weights", "steklov"])
def test_deterministic_bytes(name, capsys):
    _, first, _ = run(COMMANDS[name], capsys)
    _, second, _ = run(COMMANDS[name], capsys)
    assert first == second


def test_eval_example(capsys):
    code, out, _ = run(["eval", "--q", "2", "--n", "3", "--x", "1", "--f", "mono:2"], capsys)
    assert code == 0
    rows = parse_csv(out)
    assert len(rows) == 1
    assert float(rows[0]["value"]) == pytest.approx(8 / 7, rel=1e-15)


def test_eval_classical(capsys):
    code, out, _ = run(["eval", "--classical", "--n", "10", "--x", "1", "--f", "mono:2"], capsys)
    assert code == 0
    assert float(parse_csv(out)[0]["value"]) == pytest.approx(1.1, rel=1e-12)


def test_stirling_q_one_is_usage_error(capsys):
    code, out, err = run(["stirling", "--q", "1", "--mmax", "4"], capsys)
    assert code == 1 and out == ""
    assert len(err.strip().splitlines()) == 1
    assert err.startswith("qszasz: error kind=usage")


def test_stirling_classical(capsys):
    code, out, _ = run(["stirling", "--classical", "--mmax", "5"], capsys)
    assert code == 0
    rows = {(int(r["m"]), int(r["j"])): int(r["value"]) for r in parse_csv(out)}
    assert rows[(4, 2)] == 7 and rows[(5, 2)] == 15


@pytest.mark.parametrize(
    "argv",
    [
        ["eval", "--q", "2", "--n", "3", "--x", "1", "--f", "poly:"],
        ["bogus"],
        ["eval", "--q", "0.5", "--x", "1", "--f", "sin"],
        ["converge", "--q", "2", "--f", "sin", "--nmin", "3"],
        ["weights", "--q", "2", "--x", "1", "2"],
        ["eval", "--q", "2", "--x", "1", "--f", "sin", "--tol", "0"],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 1
    assert len(err.strip().splitlines()) == 1 and "kind=usage" in err


def test_series_exhaustion_exits_two(capsys):
    code, _, err = run(["eval", "--q", "1.01", "--n", "1", "--x", "10", "--f", "expneg", "--max-terms", "16"], capsys)
    assert code == 2
    assert "kind=series-exhausted" in err and len(err.strip().splitlines()) == 1


def test_assert_mode_exits_three_on_violation(capsys):
    argv = ["bound-check", "--mode", "sqrtmod", "--q", "2", "--f", "sqrt", "--nmin", "1", "--nmax", "3", "--count", "101"]
    code, out, _ = run(argv, capsys)
    assert code == 0 and out
    code, out, err = run(argv + ["--assert"], capsys)
    assert code == 3 and "kind=assertion" in err
    assert out  # the report is still written


def test_assert_mode_passes_when_bound_holds(capsys):
    argv = ["bound-check", "--mode", "sqrtmod", "--q", "2", "--f", "sqrt", "--nmin", "1", "--nmax", "1", "--count", "101", "--assert"]
    code, _, _ = run(argv, capsys)
    assert code == 0


def test_summary_and_logging(capsys, monkeypatch):
    monkeypatch.setenv("QSZASZ_LOG", "info")
    code, _, err = run(COMMANDS["converge"] + ["--summary"], capsys)
    assert code == 0
    assert "fitted_slope=" in err and "fitted slope" in err


def test_output_file(tmp_path, capsys):
    target = tmp_path / "w.csv"
    code, out, _ = run(COMMANDS["weights"] + ["-o", str(target)], capsys)
    assert code == 0 and out == ""
    assert target.read_text().startswith("k,node,weight\n")


def test_converge_acceptance_example(capsys):
    argv = ["converge", "--q", "2", "--f", "mono:2", "--p", "2", "--nmin", "1", "--nmax", "12", "--count", "201", "--summary"]
    code, out, err = run(argv, capsys)
    assert code == 0
    rows = parse_csv(out)
    assert [int(r["n"]) for r in rows] == list(range(1, 13))
    slope = float(err.split("fitted_slope=")[1].split()[0])
    assert slope == pytest.approx(-0.7335, abs=1e-3)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_cells_round_trip(v):
    assert float(format_cell(v)) == v


def test_integer_cells():
    assert format_cell(3) == "3"
    assert format_cell(True) == "1"
    assert format_cell(math.nan) == "nan"


def test_module_entry_point_is_deterministic():
    cmd = [sys.executable, "-m", "qszasz"] + COMMANDS["moments"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a.startswith(b"m,x,value_poly,value_series,value_rec1\n")
    bad = subprocess.run([sys.executable, "-m", "qszasz", "stirling", "--q", "1"], capture_output=True)
    assert bad.returncode == 1
