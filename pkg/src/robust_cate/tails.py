"""Tail-index estimation, severity recommendation and propensity checks."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .gbt import GbtParams, fit_gbt
from .nuisance import CausalDataset, Severity
from .pseudo import PseudoOutcomes

MIN_HILL_VALUES = 20
WARN_BOUNDS = (0.05, 0.95)
AUTO_OVERLAP_BOUNDS = (0.02, 0.98)


@dataclass(frozen=True)
class TailEstimate:
    alpha_hat: float
    threshold: float
    n_exceedances: int


def hill_estimator(values, top_fraction: float = 0.10) -> TailEstimate:
    """alpha = 1 / mean(log(|v| / t)) over |v| > t, t the (1 - top_fraction)
    quantile of |v|."""
    a = np.abs(np.asarray(values, dtype=float))
    if a.size < MIN_HILL_VALUES:
        raise ValueError(f"Hill estimator needs at least {MIN_HILL_VALUES} values, got {a.size}")
    if not 0.0 < top_fraction <= 0.5:
        raise ValueError("top_fraction must lie in (0, 0.5]")
    if not np.all(np.isfinite(a)):
        raise ValueError("values must be finite")
    t = float(np.quantile(a, 1.0 - top_fraction))
    return hill_from_threshold(a, t)


def hill_from_threshold(values, threshold: float) -> TailEstimate:
    a = np.abs(np.asarray(values, dtype=float))
    exceed = a[a > threshold]
    if threshold <= 0 or exceed.size < 2:
        raise ValueError("degenerate tail: fewer than two exceedances above a positive threshold")
    mean_log = float(np.mean(np.log(exceed / threshold)))
    if not mean_log > 0:
        raise ValueError("degenerate tail: exceedances equal the threshold")
    return TailEstimate(1.0 / mean_log, threshold, int(exceed.size))


def hill_plot_data(values, k_min: int = 10, k_max: int | None = None, n_points: int = 50):
    """(k, alpha_hat(k)) pairs using the k largest |values| above the (k+1)-th."""
    a = np.sort(np.abs(np.asarray(values, dtype=float)))[::-1]
    k_max = min(k_max or a.size // 2, a.size - 1)
    if k_max < k_min:
        raise ValueError("not enough values for a Hill plot")
    ks = np.unique(np.linspace(k_min, k_max, n_points).astype(int))
    logs = np.log(a)
    out = []
    for k in ks:
        t = a[k]
        if t <= 0:
            continue
        m = float(np.mean(logs[:k] - np.log(t)))
        if m > 0:
            out.append((int(k), 1.0 / m))
    return out


def severity_from_alpha(alpha_hat: float) -> Severity:
    if alpha_hat > 5.0:
        return Severity.NONE
    if alpha_hat > 3.0:
        return Severity.MILD
    if alpha_hat > 2.0:
        return Severity.MODERATE
    return Severity.SEVERE


@dataclass
class SeverityRecommendation:
    severity: Severity
    alpha_hat: float | None
    warnings: list


def auto_severity(dataset: CausalDataset, params: GbtParams | None = None,
                  top_fraction: float = 0.10) -> SeverityRecommendation:
    """One squared-loss boosted fit of Y on (X, W); Hill on the residuals."""
    params = params or GbtParams()
    Z = np.column_stack([dataset.X, dataset.w])
    model = fit_gbt(Z, dataset.y, params)
    resid = dataset.y - model.predict(Z)
    msgs = []
    try:
        est = hill_estimator(resid, top_fraction)
    except ValueError as exc:
        msgs.append(f"WARN.AUTOSEV Hill estimate unavailable ({exc}); defaulting to none")
        return SeverityRecommendation(Severity.NONE, None, msgs)
    sev = severity_from_alpha(est.alpha_hat)
    if sev is Severity.NONE and est.alpha_hat > 5.0:
        msgs.append(
            f"WARN.AUTOSEV alpha_hat={est.alpha_hat:.2f} suggests light tails; a large contaminated "
            "fraction can also look light-tailed because it shifts the threshold, so check the "
            "outcome histogram before trusting severity=none")
    return SeverityRecommendation(sev, est.alpha_hat, msgs)


@dataclass
class PropensityCheck:
    warnings: list
    auto_overlap: bool


def propensity_warnings(pi_hat) -> PropensityCheck:
    pi = np.asarray(pi_hat, dtype=float)
    lo, hi = float(pi.min()), float(pi.max())
    msgs = []
    if lo < WARN_BOUNDS[0] or hi > WARN_BOUNDS[1]:
        msgs.append(f"WARN.OVERLAP estimated propensities span [{lo:.3f}, {hi:.3f}], outside "
                    f"[{WARN_BOUNDS[0]}, {WARN_BOUNDS[1]}]")
    auto = lo < AUTO_OVERLAP_BOUNDS[0] or hi > AUTO_OVERLAP_BOUNDS[1]
    return PropensityCheck(msgs, auto)


def normalize_extremes(d: PseudoOutcomes, tail_threshold: float, tail_alpha: float) -> PseudoOutcomes:
    """Divide pseudo-outcomes with |D| > t by t**alpha.

    Shrinks genuine tail effects along with contamination, so it is off unless
    both parameters are given.
    """
    if not tail_threshold > 0:
        raise ValueError("tail_threshold must be positive")
    warnings.warn("WARN.EXTREMES normalize_extremes rescales tail pseudo-outcomes and biases "
                  "tail effects toward zero", stacklevel=2)
    dv = d.d.copy()
    big = np.abs(dv) > tail_threshold
    dv[big] = dv[big] / tail_threshold**tail_alpha
    return PseudoOutcomes(dv, d.weights, d.source_arm)
