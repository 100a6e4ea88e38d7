import csv
import io
import json
import os

import numpy as np
import pytest

from mplcp.cli import build_parser, main

SUBCOMMANDS = [
    ["cdf"], ["simulate"], ["lt"], ["travel-time"], ["dimension"], ["snr"], ["load"],
    ["map"], ["map", "estimate"], ["map", "validate"], ["rerun"],
]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.mark.parametrize("cmd", SUBCOMMANDS, ids=lambda c: "-".join(c))
def test_help_exits_zero(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main(cmd + ["--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


@pytest.mark.parametrize(
    "argv",
    [
        ["cdf", "--lambda", "-1", "--lambda-g", "1"],
        ["cdf", "--lambda-g", "1"],
        ["simulate", "--lambda", "5", "--lambda-g", "1", "--runs", "0"],
        ["lt", "--lambda", "1", "--r", "-2"],
        ["travel-time", "--lambda", "1", "--lambda-g", "0.5", "--q", "0", "--v", "10"],
        ["dimension", "--lambda", "1", "--q", "0.2", "--v", "10", "--tau", "100", "--target", "1.5"],
        ["load", "--lambda", "5", "--lambda-g", "10", "--n0", "0"],
    ],
)
def test_invalid_parameters_exit_2(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "error" in err


def test_unknown_option_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["cdf", "--lambda", "1", "--lambda-g", "1", "--bogus"])
    assert exc.value.code == 2


def test_cdf_methods_agree(capsys):
    base = ["cdf", "--lambda", "3", "--lambda-g", "1.5", "--k", "4", "--r-max", "1.5", "--r-steps", "16"]
    _, a, _ = run(capsys, *base)
    _, b, _ = run(capsys, *base, "--method", "faa")
    ha, ta = table(a)
    hb, tb = table(b)
    assert ha == hb == ["r", "k", "F"]
    np.testing.assert_array_equal(ta[:, :2], tb[:, :2])
    np.testing.assert_allclose(ta[:, 2], tb[:, 2], rtol=1e-9, atol=1e-12)
    zero = ta[ta[:, 0] == 0]
    assert np.all(zero[:, 2] == 0)


def test_csv_headers(capsys, tmp_path):
    seg = os.path.join(os.path.dirname(__file__), os.pardir, "src", "mplcp", "data", "manhattan_sample")
    cases = {
        ("simulate", "--lambda", "5", "--lambda-g", "1", "--runs", "50", "--r-steps", "5"):
            ["r", "k", "empirical", "analytic", "ks"],
        ("lt", "--lambda", "0.5", "--r", "2", "--l-steps", "5"): ["l", "density", "density_0f1", "atom"],
        ("travel-time", "--lambda", "1", "--lambda-g", "0.5", "--q", "0.6", "--v", "10", "--tau-steps", "5"):
            ["tau", "F", "tail_bound"],
        ("snr", "--lambda", "5", "--lambda-g", "10", "--theta-steps", "5"): ["theta_db", "k", "F"],
        ("load", "--lambda", "5", "--lambda-g", "10"): ["n", "pmf"],
        ("map", "estimate", "--segments", seg + ".seg", "--queries", seg + ".queries"):
            ["lambda_h", "lambda_v", "lam", "n_horizontal", "n_vertical", "n_diagonal"],
    }
    for argv, header in cases.items():
        code, out, _ = run(capsys, *argv)
        assert code == 0, argv
        assert out.splitlines()[0].split(",") == header


def test_load_pmf_sums_to_one(capsys):
    _, out, _ = run(capsys, "load", "--lambda", "5", "--lambda-g", "10")
    _, t = table(out)
    assert t[:, 1].sum() == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_array_equal(t[:, 0], np.arange(len(t)))


def test_dimension_reports_intensity(capsys):
    code, out, _ = run(capsys, "dimension", "--lambda", "1", "--q", "0.2", "--v", "10",
                       "--tau", "100", "--target", "0.9")
    assert code == 0
    header, t = table(out)
    assert header == ["lambda_g", "coverage", "tail_bound"]
    assert t[0, 1] >= 0.9


def test_travel_time_with_simulation_column(capsys):
    _, out, _ = run(capsys, "travel-time", "--lambda", "1", "--lambda-g", "0.5", "--q", "0.6", "--v", "10",
                    "--tau-steps", "4", "--sim-runs", "200")
    header, t = table(out)
    assert header == ["tau", "F", "tail_bound", "simulated"]
    assert np.all((t[:, 3] >= 0) & (t[:, 3] <= 1))


def test_manifest_and_rerun_byte_identical(capsys, tmp_path):
    out = tmp_path / "sim.csv"
    argv = ["simulate", "--lambda", "8", "--lambda-g", "0.5", "--k", "3", "--runs", "1100", "--seed", "5",
            "--r-steps", "11", "--threads", "1", "--out", str(out)]
    assert main(argv) == 0
    man_path = str(out) + ".manifest.json"
    man = json.load(open(man_path))
    assert man["command"] == "simulate" and man["seed"] == 5
    assert "threads" not in man["params"] and "timestamp" not in man
    original = out.read_bytes()
    for threads in ("1", "8"):
        again = tmp_path / f"again{threads}.csv"
        code = main(["rerun", man_path, "--out", str(again), "--threads", threads, "--check"])
        assert code == 0
        assert again.read_bytes() == original
    # the rerun wrote its own manifest, equal up to the output path
    m2 = json.load(open(str(tmp_path / "again8.csv") + ".manifest.json"))
    assert m2["params"] == man["params"]
    assert list(m2["outputs"].values()) == list(man["outputs"].values())


def test_rerun_detects_changed_input(capsys, tmp_path, data_dir):
    seg = tmp_path / "m.seg"
    qry = tmp_path / "m.queries"
    seg.write_bytes(open(os.path.join(data_dir, "manhattan_sample.seg"), "rb").read())
    qry.write_bytes(open(os.path.join(data_dir, "manhattan_sample.queries"), "rb").read())
    out = tmp_path / "est.csv"
    assert main(["map", "estimate", "--segments", str(seg), "--queries", str(qry), "--out", str(out)]) == 0
    man_path = str(out) + ".manifest.json"
    assert set(json.load(open(man_path))["inputs"]) == {str(seg), str(qry)}
    assert main(["rerun", man_path, "--check"]) == 0
    seg.write_text(seg.read_text() + "0 0 0 0.001\n")
    assert main(["rerun", man_path, "--check"]) == 2


def test_rerun_check_flags_mismatch(capsys, tmp_path):
    out = tmp_path / "c.csv"
    assert main(["cdf", "--lambda", "2", "--lambda-g", "1", "--r-steps", "3", "--out", str(out)]) == 0
    man_path = str(out) + ".manifest.json"
    man = json.load(open(man_path))
    man["outputs"] = {str(out): "0" * 64}
    open(man_path, "w").write(json.dumps(man))
    assert main(["rerun", man_path, "--check"]) == 1


def test_map_validate_small(capsys, data_dir):
    seg = os.path.join(data_dir, "manhattan_sample.seg")
    qry = os.path.join(data_dir, "manhattan_sample.queries")
    code, out, _ = run(capsys, "map", "validate", "--segments", seg, "--queries", qry, "--lambda-g", "0.5",
                       "--runs", "20", "--k", "2", "--r-steps", "6")
    assert code == 0
    header, t = table(out)
    assert header == ["k", "radius", "empirical", "mplcp", "ppp"]
    assert t.shape == (12, 5)


def test_parser_builds():
    assert build_parser().prog == "mplcp"
