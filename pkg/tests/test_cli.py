import csv
import json

import numpy as np
import pytest

from robust_cate.cli import EXIT_INPUT, EXIT_OK, EXIT_SHAPE, main
from robust_cate.dgp import DgpSpec, generate

FAST = "[fit]\nchains = 2\nwarmup = 200\nsamples = 300\n"


@pytest.fixture(scope="module")
def clean_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "clean.csv"
    generate(DgpSpec("whale", 600, density=0.0, seed=31)).to_csv(path)
    return path


def _config(tmp_path, extra=""):
    p = tmp_path / "fit.ini"
    p.write_text(FAST + extra)
    return str(p)


def test_fit_round_trip(clean_csv, tmp_path, capsys):
    out = tmp_path / "summary.json"
    assert main(["fit", str(clean_csv), "--config", _config(tmp_path), "--out", str(out)]) == EXIT_OK
    summary = json.loads(out.read_text())
    assert summary["ate"]["mean"] == pytest.approx(2.0, abs=0.2)
    assert json.loads(capsys.readouterr().out) == summary


def test_severity_override_reaches_nuisance_block(clean_csv, tmp_path, capsys):
    assert main(["fit", str(clean_csv), "--config", _config(tmp_path, "severity = moderate\n")]) == EXIT_OK
    nuisance = json.loads(capsys.readouterr().out)["nuisance"]
    assert nuisance["severity"] == "moderate" and nuisance["delta"] == 1.0


def test_missing_treatment_column(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("y,x0,x1\n1,0,0\n")
    assert main(["fit", str(p)]) == EXIT_INPUT
    assert "missing column 'w'" in capsys.readouterr().err


def test_malformed_cell_reports_row_and_column(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("y,w,x0\n1,0,0.1\n2,1,oops\n")
    assert main(["fit", str(p)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "row 3" in err and "'x0'" in err


def test_single_arm_is_shape_error(tmp_path):
    p = tmp_path / "one.csv"
    rows = "\n".join(f"{i},1,{i / 10}" for i in range(30))
    p.write_text("y,w,x0\n" + rows + "\n")
    assert main(["fit", str(p)]) == EXIT_SHAPE


def test_diagnose_needs_twenty_rows(tmp_path):
    p = tmp_path / "short.csv"
    rng = np.random.default_rng(0)
    rows = "\n".join(f"{rng.normal()},{i % 2},{rng.normal()}" for i in range(19))
    p.write_text("y,w,x0\n" + rows + "\n")
    assert main(["diagnose", str(p)]) == EXIT_INPUT


def test_diagnose_writes_hill_plot(clean_csv, tmp_path, capsys):
    out = tmp_path / "hill.csv"
    assert main(["diagnose", str(clean_csv), "--out", str(out)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["recommended_severity"] in ("none", "mild") and report["alpha_hat"] > 3
    with open(out) as fh:
        assert next(csv.reader(fh)) == ["k", "alpha_hat"]


@pytest.mark.xfail(strict=True, reason="clean Gaussian residuals give a Hill estimate near 4.3, in the mild band")
def test_diagnose_clean_recommends_none(clean_csv, capsys):
    assert main(["diagnose", str(clean_csv)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["recommended_severity"] == "none"


def test_gen_dgp_writes_csv(tmp_path, capsys):
    out = tmp_path / "g.csv"
    assert main(["gen-dgp", "--kind", "tail_hetero", "--n", "100", "--param", "tail_tau=6",
                 "--seed", "3", "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 100 and {float(r["tau_true"]) for r in rows} <= {2.0, 6.0}
    assert main(["gen-dgp", "--param", "nope=1"]) == EXIT_INPUT
    assert main(["gen-dgp", "--param", "novalue"]) == EXIT_INPUT


def test_unknown_subcommand_is_input_error():
    assert main(["frobnicate"]) == EXIT_INPUT


def test_benchmark_empty_density_grid(tmp_path):
    spec = tmp_path / "b.ini"
    spec.write_text("[benchmark]\nname = empty\ndensities =\n")
    assert main(["benchmark", str(spec), "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_benchmark_small_run(tmp_path, capsys):
    spec = tmp_path / "b.ini"
    spec.write_text("[benchmark]\nname = tiny\nn = 300\ndensities = 0, 0.05\nseeds = 1\n"
                    "metrics = auto_severity\n"
                    "[config:severe]\nseverity = severe\nchains = 2\nwarmup = 150\nsamples = 200\n")
    out = tmp_path / "o"
    assert main(["benchmark", str(spec), "--out", str(out), "--seed", "4"]) == EXIT_OK
    with open(out / "rows.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and all(r["error"] == "" for r in rows)
    assert all(r["auto_severity"] for r in rows)
    with open(out / "aggregate.csv") as fh:
        for row in csv.DictReader(fh):
            for key in ("rmse", "coverage", "coverage_lo", "coverage_hi", "width"):
                float(row[key])
    for name in ("aggregate.csv", "density_sweep.csv", "influence.csv", "residual_histogram.csv", "hill_plot.csv"):
        assert (out / name).exists()
