import csv
import io
import json

import pytest

from steincov.cli import UsageError, parse_grid, parse_number, run


def call(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_number_parsing():
    assert parse_number("1-1e-6") == 1 - 1e-6
    assert parse_number("2.5e-3") == 2.5e-3
    assert parse_grid("1e-6,1-1e-6,512") == (1e-6, 1 - 1e-6, 512)
    for bad in ("abc", "1e-6,1", "0.5,0.4,3", "0.1,0.9,1"):
        with pytest.raises(UsageError):
            parse_grid(bad) if "," in bad else parse_number(bad)


def test_kernel_binomial(capsys):
    code, out, _ = call(capsys, "kernel", "--family", "binomial", "--params", "3,0.5", "--ell", "+1")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert out.splitlines()[0] == "x,tau,closed_tau,abs_diff"
    row = next(r for r in rows if r["x"] == "2.0")
    assert float(row["tau"]) == 1.0 and float(row["abs_diff"]) == 0.0
    assert "\r" not in out


def test_curves_gaussian_diagonal(capsys):
    code, out, _ = call(capsys, "curves", "--family", "normal", "--params", "0,1", "--xprime", "0",
                        "--grid", "1e-6,1-1e-6,512")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["x", "xprime", "K_over_p", "K_diag_over_p"]
    row = next(r for r in rows if float(r["x"]) == 0.0)
    assert float(row["K_over_p"]) == pytest.approx(0.6267, abs=1e-4)
    assert float(row["K_diag_over_p"]) == pytest.approx(0.626657068657750, abs=1e-12)


def test_bounds_json(capsys):
    code, out, _ = call(capsys, "bounds", "--family", "normal", "--params", "0,1", "--g", "square")
    body = json.loads(out)
    assert code == 0
    assert body["lower"] == pytest.approx(0, abs=1e-8) and body["upper"] == pytest.approx(4, abs=1e-8)


def test_table_and_eigen(capsys):
    code, out, _ = call(capsys, "table", "--family", "poisson", "--params", "2", "--ell", "-1")
    assert code == 0 and out.startswith("g,table_lower")
    code, out, _ = call(capsys, "eigen", "--family", "binomial", "--params", "5,0.3", "--format", "json")
    assert code == 0
    rows = json.loads(out)["rows"]
    assert rows[3]["exact_eigenvalue"] == pytest.approx(-1 / 0.7, rel=1e-14)


def test_usage_errors(capsys):
    assert call(capsys, "kernel")[0] == 2
    assert call(capsys, "kernel", "--family", "normal", "--params", "0")[0] == 2
    assert call(capsys, "kernel", "--family", "binomial", "--params", "3,0.5", "--ell", "0")[0] == 2
    assert call(capsys, "eigen", "--family", "poisson", "--params", "2")[0] == 2
    assert call(capsys, "frobnicate")[0] == 2
    code, _, err = call(capsys, "curves", "--family", "normal", "--params", "0,1", "--grid", "0.5,0.1,3")
    assert code == 2 and "error" in err


def test_atomic_output_and_determinism(tmp_path, capsys):
    target = tmp_path / "k.csv"
    argv = ["kernel", "--family", "gamma", "--params", "1.3,2.4", "--grid", "0.01,0.99,64", "--output", str(target)]
    assert run(argv) == 0
    first = target.read_bytes()
    assert run(argv) == 0
    assert target.read_bytes() == first
    assert [p.name for p in tmp_path.iterdir()] == ["k.csv"]


def test_verify_scope(capsys):
    code, out, _ = call(capsys, "verify", "--scope", "binomial", "--seed", "7")
    body = json.loads(out)
    assert code == 0 and body["passed"] and body["seed"] == 7
