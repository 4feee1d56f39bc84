"""Convergence diagnostics for multi-chain MCMC output."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_DRAWS = 10


@dataclass
class ChainDiagnostics:
    r_hat: np.ndarray
    ess: np.ndarray
    bfmi: np.ndarray
    iac: np.ndarray
    divergences: int

    def healthy(self, r_hat_max=1.05, ess_min=200.0, bfmi_min=0.3) -> bool:
        return bool(np.all(self.r_hat < r_hat_max) and np.all(self.ess > ess_min)
                    and np.all(self.bfmi > bfmi_min) and self.divergences == 0)

    def to_dict(self) -> dict:
        return {
            "r_hat": self.r_hat.tolist(),
            "ess": self.ess.tolist(),
            "bfmi": self.bfmi.tolist(),
            "iac": self.iac.tolist(),
            "divergences": int(self.divergences),
        }


def _as_chains(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3:
        raise ValueError("expected a chains x samples (x params) array")
    if x.shape[1] < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} draws per chain, got {x.shape[1]}")
    return x


def _split(x):
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def split_rhat(x) -> np.ndarray:
    """Split-chain potential scale reduction, one value per parameter.

    Floored at 1: values below 1 only reflect the (n - 1) / n factor on short
    chains and carry no convergence information.
    """
    x = _split(_as_chains(x))
    n = x.shape[1]
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * W + B / n
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sqrt(var_plus / W)
    # constant parameters carry no scale information
    return np.where(W > 0, np.maximum(r, 1.0), 1.0)


def _autocov(x):
    """Autocovariance of each chain along axis 1 (biased, FFT based)."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, n=size, axis=1)
    return np.fft.irfft(f * np.conj(f), n=size, axis=1)[:, :n] / n


def effective_sample_size(x) -> np.ndarray:
    """Multi-chain ESS from split chains with Geyer's initial monotone
    sequence; capped at the total number of draws."""
    x = _split(_as_chains(x))
    m, n, p = x.shape
    total = m * n
    acov = _autocov(x)
    out = np.empty(p)
    for j in range(p):
        a = acov[:, :, j]
        chain_var = a[:, 0] * n / (n - 1.0)
        mean_var = chain_var.mean()
        var_plus = mean_var * (n - 1.0) / n
        if m > 1:
            var_plus += x[:, :, j].mean(axis=1).var(ddof=1)
        if not var_plus > 0:
            out[j] = total
            continue
        rho = 1.0 - (mean_var - a.mean(axis=0)) / var_plus
        rho[0] = 1.0
        tau, prev = -1.0, np.inf
        for t in range(0, n - 1, 2):
            pair = rho[t] + rho[t + 1]
            if pair <= 0:
                break
            pair = min(pair, prev)
            tau += 2.0 * pair
            prev = pair
        out[j] = total / max(tau, 1.0)
    return np.minimum(out, total)


def bfmi(energy) -> np.ndarray:
    """Per-chain Var[diff(E)] / Var[E]."""
    e = np.asarray(energy, dtype=float)
    if e.ndim == 1:
        e = e[None, :]
    return np.var(np.diff(e, axis=1), axis=1) / np.var(e, axis=1)


def diagnose(draws) -> "ChainDiagnostics":
    x = _as_chains(draws.draws)
    if x.shape[0] < 2:
        raise ValueError("split R-hat needs at least two chains")
    ess = effective_sample_size(x)
    return ChainDiagnostics(
        r_hat=split_rhat(x),
        ess=ess,
        bfmi=bfmi(draws.energy),
        iac=x.shape[0] * x.shape[1] / ess,
        divergences=int(np.asarray(draws.divergent).sum()),
    )
