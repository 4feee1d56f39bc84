import json

import numpy as np
import pytest

from robust_cate.basis import parse_basis
from robust_cate.dgp import DgpSpec, generate
from robust_cate.pipeline import StageError, fit, predict_cate
from robust_cate.nuisance import CausalDataset
from robust_cate.stages import FitConfig
from tests.conftest import QUICK_SAMPLER


def test_clean_defaults_recover_ate(clean_whale):
    res = fit(clean_whale.dataset, FitConfig(master_seed=1))
    ate = res.ate()
    assert ate["mean"] == pytest.approx(2.0, abs=0.15)
    assert res.diagnostics.r_hat.max() < 1.05 and res.diagnostics.ess.min() > 200


def test_reproducible_summary(clean_whale):
    cfg = FitConfig(sampler=QUICK_SAMPLER, master_seed=5)
    a = json.dumps(fit(clean_whale.dataset, cfg).summary(), sort_keys=True)
    b = json.dumps(fit(clean_whale.dataset, cfg).summary(), sort_keys=True)
    assert a == b


def test_summary_is_json_ready(whale_5pct):
    s = fit(whale_5pct.dataset, FitConfig(severity="severe", sampler=QUICK_SAMPLER)).summary()
    text = json.dumps(s)
    back = json.loads(text)
    assert back["nuisance"]["severity"] == "severe" and back["nuisance"]["delta"] == 0.5
    assert back["basis"] == "1" and len(back["beta"]) == 1
    assert {"r_hat", "ess", "bfmi", "iac", "divergences"} <= set(back["diagnostics"])


def test_predict_cate_intercept_is_constant(clean_whale):
    res = fit(clean_whale.dataset, FitConfig(sampler=QUICK_SAMPLER))
    pred = predict_cate(res, np.random.default_rng(0).standard_normal((7, 5)))
    assert np.ptp(pred.tau_mean) == pytest.approx(0.0, abs=1e-12)


def test_predict_cate_tail_basis_difference_is_indicator_coefficient(clean_whale):
    cfg = FitConfig(basis=parse_basis("1, tail(0, 1.96)"), sampler=QUICK_SAMPLER)
    res = fit(clean_whale.dataset, cfg)
    tail, bulk = np.zeros(5), np.zeros(5)
    tail[0] = 3.0
    pred = predict_cate(res, np.vstack([tail, bulk]))
    coef = res.contrast(np.array([0.0, 1.0]))["mean"]
    assert pred.tau_mean[0] - pred.tau_mean[1] == pytest.approx(coef, abs=1e-9)


def test_one_percent_whales_break_the_non_robust_fit():
    d = generate(DgpSpec("whale", 1000, density=0.01, seed=21))
    res = fit(d.dataset, FitConfig(severity="none", sampler=QUICK_SAMPLER))
    assert abs(res.ate()["mean"] - 2.0) >= 1.0


def test_severe_handles_twenty_percent_whales():
    d = generate(DgpSpec("whale", 1000, density=0.2, seed=22))
    ate = fit(d.dataset, FitConfig(severity="severe", master_seed=3)).ate()
    assert abs(ate["mean"] - 2.0) < 0.3 and ate["ci"][1] - ate["ci"][0] < 1.0


def test_stage_error_names_stage():
    X = np.random.default_rng(0).standard_normal((60, 3))
    w = np.zeros(60)
    w[:1] = 1
    with pytest.raises(StageError) as info:
        fit(CausalDataset(X, w, X[:, 0]), FitConfig(sampler=QUICK_SAMPLER))
    assert info.value.stage == "nuisance"


def test_modular_fit_through_pipeline(clean_whale):
    from robust_cate.stages import ModularConfig
    res = fit(clean_whale.dataset, FitConfig(sampler=QUICK_SAMPLER, modular=ModularConfig(2, "rubin"),
                                             calibrate_eta="off"))
    s = res.summary()
    assert s["pooling"] == "rubin" and s["m"] == 2 and len(s["diagnostics"]) == 2
