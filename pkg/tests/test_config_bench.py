import numpy as np
import pytest

from robust_cate.bench import BenchmarkSpec, aggregate, influence_overlay, resolve_jobs
from robust_cate.configfile import ConfigError, fit_config_from_mapping, load_benchmark
from robust_cate.dgp import DgpSpec
from robust_cate.losses import Huber
from robust_cate.stages import EtaMode, Pooling


def test_fit_mapping_overrides():
    cfg = fit_config_from_mapping({"severity": "mild", "basis": "1, x0", "likelihood": "student_t", "nu": "4",
                                   "modular_m": "3", "pooling": "rubin", "delta": "0.7", "min_samples_leaf": "1",
                                   "calibrate_eta": "off", "extremes_threshold": "5", "extremes_alpha": "1.5"})
    assert cfg.basis.labels() == ["1", "x0"]
    assert cfg.likelihood.kind == "student_t"
    assert cfg.modular.m == 3 and cfg.modular.pooling is Pooling.RUBIN
    assert cfg.gbt_overrides["loss"] == Huber(0.7) and cfg.gbt_overrides["min_samples_leaf"] == 1
    assert cfg.calibrate_eta is EtaMode.OFF and cfg.extremes == (5.0, 1.5)


@pytest.mark.parametrize("mapping", [{"bogus": "1"}, {"likelihood": "cauchy"}, {"extremes_threshold": "5"},
                                     {"use_overlap": "maybe"}, {"chains": "two"}])
def test_fit_mapping_errors(mapping):
    with pytest.raises(ConfigError):
        fit_config_from_mapping(mapping)


def test_load_benchmark(tmp_path):
    p = tmp_path / "b.ini"
    p.write_text("[benchmark]\nname = sweep\ndgp = tail_hetero\nn = 400\ndensities = 0, 0.1 ; grid\n"
                 "seeds = 2\nparam.tail_tau = 8\n[config:none]\nseverity = none\n[config:severe]\nseverity = severe\n")
    spec = load_benchmark(p)
    assert spec.name == "sweep" and spec.densities == (0.0, 0.1) and spec.seeds == 2
    assert spec.dgp.param("tail_tau") == 8.0 and [c for c, _ in spec.configs] == ["none", "severe"]
    assert len(list(spec.tasks(0))) == 4


def test_benchmark_spec_validation():
    with pytest.raises(ValueError):
        BenchmarkSpec("x", DgpSpec(), ())
    with pytest.raises(ValueError):
        BenchmarkSpec("x", DgpSpec(), (0.1,), extra_metrics=("nope",))
    with pytest.raises(ValueError):
        BenchmarkSpec("x", DgpSpec(), (1.5,))


def _row(cell, config, mean, covered, error=""):
    return {"benchmark": "b", "cell": cell, "density": 0.1 * cell, "config": config, "ate_mean": mean,
            "ate_true": 2.0, "ate_sq_error": (mean - 2.0) ** 2, "ate_error": abs(mean - 2.0), "covered": covered,
            "width": 1.0, "pehe": 0.5, "regret": 0.0, "fraction_treated": 1.0, "subgroup_mean": "",
            "subgroup_covered": "", "dispersion": "", "alpha_hat": "", "error": error}


def test_aggregate_means_and_errors():
    rows = [_row(0, "a", 2.0, 1), _row(0, "a", 3.0, 0), _row(0, "a", 9.0, 0, error="boom"), _row(1, "a", 2.5, 1)]
    agg = aggregate(rows)
    first = agg[0]
    assert first["n_ok"] == 2 and first["n_error"] == 1
    assert first["ate_mean"] == 2.5 and first["bias"] == 0.5
    assert first["rmse"] == pytest.approx(np.sqrt(0.5)) and first["coverage"] == 0.5
    assert first["subgroup_mean"] == ""
    assert agg[1]["n_ok"] == 1


def test_influence_overlay_shapes():
    rows = influence_overlay(n=11)
    assert len(rows) == 11 and rows[5]["r"] == 0.0 and rows[5]["psi_welsch"] == 0.0


def test_resolve_jobs(monkeypatch):
    monkeypatch.setenv("ROBUST_CATE_JOBS", "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(0) == 1
    monkeypatch.delenv("ROBUST_CATE_JOBS")
    assert resolve_jobs(None) == 1
