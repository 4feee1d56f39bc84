"""Phase 3: generalised posterior over basis coefficients, NUTS and diagnostics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..basis import BasisSpec, evaluate_basis
from .density import GeneralisedPosterior, LikelihoodSpec, PriorSpec, log_density_and_grad
from .diagnostics import ChainDiagnostics, bfmi, diagnose, effective_sample_size, split_rhat
from .nuts import PosteriorDraws, SamplerConfig, nuts_sample

__all__ = [
    "ChainDiagnostics", "CateSummary", "GeneralisedPosterior", "LikelihoodSpec", "PosteriorDraws",
    "PosteriorFit", "PriorSpec", "SamplerConfig", "bfmi", "diagnose", "effective_sample_size",
    "fit_posterior", "initial_point", "log_density_and_grad", "nuts_sample", "split_rhat",
    "summarize_cate", "summarize_contrast", "write_draws_csv",
]


def _wls(Phi, d, w):
    sw = np.sqrt(w)
    try:
        beta, *_ = np.linalg.lstsq(Phi * sw[:, None], d * sw, rcond=None)
    except np.linalg.LinAlgError:
        return np.zeros(Phi.shape[1])
    return beta if np.all(np.isfinite(beta)) else np.zeros(Phi.shape[1])


def _huber_irls(Phi, d, w, beta, iters=50):
    for _ in range(iters):
        r = d - Phi @ beta
        scale = np.median(np.abs(r - np.median(r))) / 0.6745
        if not scale > 0:
            break
        k = 1.345 * scale
        a = np.abs(r)
        u = w * np.where(a <= k, 1.0, k / np.maximum(a, 1e-300))
        new = _wls(Phi, d, u)
        if np.allclose(new, beta, rtol=1e-8, atol=1e-10):
            return new
        beta = new
    return beta


def initial_point(target: GeneralisedPosterior) -> np.ndarray:
    """WLS start, refined by Huber IRLS and then by the posterior mode.

    A plain least-squares start can sit where the Welsch density is flat when
    a few extreme outcomes drag it away from the bulk.
    """
    Phi, d, w = target.Phi, target.d, target.w
    beta = _huber_irls(Phi, d, w, _wls(Phi, d, w))
    theta = beta
    if target.dim > target.p:
        r = d - Phi @ beta
        s = np.median(np.abs(r)) / 0.6745 if target.lik.kind == "student_t" else np.std(r)
        theta = np.append(beta, np.log(max(s, 1e-8)))

    def neg(t):
        lp, g = target(t)
        return -lp, -g

    try:
        res = minimize(neg, theta, jac=True, method="L-BFGS-B")
        if np.all(np.isfinite(res.x)) and -res.fun >= target(theta)[0]:
            theta = res.x
    except ValueError:
        pass
    return theta


@dataclass
class PosteriorFit:
    draws: PosteriorDraws  # beta only
    diagnostics: ChainDiagnostics | None
    target: GeneralisedPosterior = field(repr=False)
    init: np.ndarray = field(repr=False)
    sigma_draws: np.ndarray | None = None

    @property
    def beta_mean(self) -> np.ndarray:
        return self.draws.flat().mean(axis=0)

    @property
    def effective_c(self) -> float:
        return self.target.c


def fit_posterior(Phi, d, lik: LikelihoodSpec = LikelihoodSpec(), prior: PriorSpec | None = None,
                  sampler: SamplerConfig = SamplerConfig(), seed: int = 0, init=None) -> PosteriorFit:
    Phi = np.asarray(getattr(Phi, "phi", Phi), dtype=float)
    prior = prior or PriorSpec.default_for(Phi.shape[1])
    target = GeneralisedPosterior(Phi, d, lik, prior)
    theta0 = initial_point(target) if init is None else np.asarray(init, dtype=float)
    full = nuts_sample(target, target.dim, sampler, seed=seed, init=theta0)
    draws = full.subset(slice(0, target.p))
    sigma = np.exp(full.draws[..., target.p]) if target.dim > target.p else None
    diag = diagnose(draws) if sampler.chains >= 2 and sampler.samples >= 10 else None
    return PosteriorFit(draws, diag, target, theta0, sigma)


def _beta_matrix(draws):
    if isinstance(draws, PosteriorFit):
        draws = draws.draws
    if isinstance(draws, PosteriorDraws):
        return draws.flat()
    arr = np.asarray(draws, dtype=float)
    return arr.reshape(-1, arr.shape[-1])


@dataclass
class CateSummary:
    tau_mean: np.ndarray
    tau_ci: tuple
    beta_summary: list
    warnings: list = field(default_factory=list)


def summarize_contrast(draws, a, level: float = 0.95) -> dict:
    """Posterior mean, sd and equal-tailed interval of a^T beta."""
    B = _beta_matrix(draws)
    a = np.asarray(a, dtype=float)
    if a.shape != (B.shape[1],):
        raise ValueError(f"contrast has length {a.shape}, expected {B.shape[1]}")
    v = B @ a
    lo, hi = np.quantile(v, [(1 - level) / 2, 1 - (1 - level) / 2])
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "ci": [float(lo), float(hi)]}


def summarize_cate(draws, spec: BasisSpec, X_eval, level: float = 0.95) -> CateSummary:
    B = _beta_matrix(draws)
    if B.shape[1] != spec.p:
        raise ValueError(f"draws have {B.shape[1]} coefficients but the basis has {spec.p}")
    Phi = evaluate_basis(spec, X_eval).phi
    tau = B @ Phi.T
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(tau, [a, 1.0 - a], axis=0)
    labels = spec.labels()
    betas = []
    for j in range(spec.p):
        e = np.zeros(spec.p)
        e[j] = 1.0
        betas.append({"term": labels[j], **summarize_contrast(B, e, level)})
    warnings = []
    raw = draws.draws if isinstance(draws, PosteriorFit) else draws
    if isinstance(raw, PosteriorDraws) and raw.n_chains >= 2 and raw.n_samples >= 10:
        rh = split_rhat(raw.draws)
        if np.any(rh >= 1.05):
            warnings.append(f"R-hat {rh.max():.3f} >= 1.05; summaries may be unreliable")
    return CateSummary(tau.mean(axis=0), (lo, hi), betas, warnings)


def write_draws_csv(draws: PosteriorDraws, path) -> None:
    p = draws.draws.shape[-1]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["chain", "iter"] + [f"beta_{j}" for j in range(p)] + ["energy", "divergent"])
        for c in range(draws.n_chains):
            for i in range(draws.n_samples):
                out.writerow([c, i] + [repr(float(v)) for v in draws.draws[c, i]]
                             + [repr(float(draws.energy[c, i])), int(draws.divergent[c, i])])
