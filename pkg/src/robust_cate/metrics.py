"""Evaluation metrics for CATE estimates and interval calibration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Z_95 = 1.959963984540054


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def pehe(tau_hat, tau_true) -> float:
    a, b = _pair(tau_hat, tau_true)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def ate_error(tau_hat, tau_true) -> float:
    a, b = _pair(tau_hat, tau_true)
    return float(abs(a.mean() - b.mean()))


def wilson_interval(k: int, n: int, z: float = Z_95) -> tuple[float, float]:
    if n <= 0 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n > 0")
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return float(max(0.0, centre - half)), float(min(1.0, centre + half))


@dataclass(frozen=True)
class CoverageReport:
    covered: int
    total: int
    rate: float
    wilson_lo: float
    wilson_hi: float
    mean_width: float


def _intervals(intervals):
    arr = np.asarray(intervals, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("intervals must be a sequence of (lo, hi) pairs")
    if np.any(arr[:, 0] > arr[:, 1]):
        raise ValueError("interval with lo > hi")
    return arr


def coverage(intervals, truths) -> CoverageReport:
    arr = _intervals(intervals)
    t = np.asarray(truths, dtype=float).ravel()
    if t.size != arr.shape[0] or t.size < 1:
        raise ValueError("need one truth per interval and at least one interval")
    hit = (arr[:, 0] <= t) & (t <= arr[:, 1])
    k, n = int(hit.sum()), int(t.size)
    lo, hi = wilson_interval(k, n)
    return CoverageReport(k, n, k / n, lo, hi, float(np.mean(arr[:, 1] - arr[:, 0])))


def winkler_score(lo, hi, truth, alpha: float = 0.05) -> float:
    if lo > hi:
        raise ValueError("lo > hi")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    score = hi - lo
    if truth < lo:
        score += 2.0 / alpha * (lo - truth)
    elif truth > hi:
        score += 2.0 / alpha * (truth - hi)
    return float(score)


def policy_regret(tau_hat, tau_true) -> float:
    """Mean value lost by treating iff tau_hat > 0 instead of iff tau_true > 0."""
    a, b = _pair(tau_hat, tau_true)
    oracle = np.where(b > 0, b, 0.0)
    policy = np.where(a > 0, b, 0.0)
    return float(np.mean(oracle - policy))


def stratified_coverage(intervals, truths, strata_values, n_bins: int = 5) -> list[CoverageReport]:
    arr = _intervals(intervals)
    t = np.asarray(truths, dtype=float).ravel()
    s = np.asarray(strata_values, dtype=float).ravel()
    if not (t.size == s.size == arr.shape[0]):
        raise ValueError("intervals, truths and strata must have equal length")
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if np.all(s == s[0]):
        raise ValueError("degenerate strata: all values equal")
    # rank-based bins give equal counts even with ties in the strata
    order = np.argsort(s, kind="stable")
    bins = np.empty(s.size, dtype=int)
    bins[order] = np.arange(s.size) * n_bins // s.size
    return [coverage(arr[bins == b], t[bins == b]) for b in range(n_bins)]
