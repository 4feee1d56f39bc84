"""Learning-rate (eta) calibration for the generalised posterior."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .losses import Tukey, Welsch
from .metrics import winkler_score
from .nuisance import CausalDataset
from .posterior import LikelihoodSpec, PosteriorFit, PriorSpec, SamplerConfig, fit_posterior
from .pseudo import PseudoOutcomes
from .stages import (EtaMode, FitConfig, StageLog, ate_contrast, derive_seed, design, effective_likelihood,
                     huber_regression, make_pseudo, preset_delta, resolve_severity, run_nuisance)

EIG_FLOOR = 1e-3


@dataclass
class SandwichMatrices:
    i_hat: np.ndarray  # stabilised
    j_hat: np.ndarray
    ridge_lambda: float
    min_eig_raw: float
    i_raw: np.ndarray = field(repr=False, default=None)

    @property
    def raw_indefinite(self) -> bool:
        return self.min_eig_raw <= 0.0


class _GaussianScore:
    def __init__(self, sigma: float):
        self.s2 = sigma * sigma

    def psi(self, r):
        return np.asarray(r, dtype=float) / self.s2

    def psi_prime(self, r):
        return np.full(np.shape(r), 1.0 / self.s2)


class _StudentTScore:
    def __init__(self, nu: float, sigma: float):
        self.nu, self.s2 = nu, sigma * sigma

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        return (self.nu + 1.0) * r / (self.nu * self.s2 + r * r)

    def psi_prime(self, r):
        r2 = np.square(r)
        return (self.nu + 1.0) * (self.nu * self.s2 - r2) / (self.nu * self.s2 + r2) ** 2


def likelihood_score(fit: PosteriorFit):
    """psi and psi' of the fitted pseudo-likelihood; an inferred sigma is
    fixed at its posterior mean."""
    lik = fit.target.lik
    if lik.kind == "welsch":
        return Welsch(fit.effective_c)
    if lik.kind == "tukey":
        return Tukey(fit.effective_c)
    sigma = float(np.mean(fit.sigma_draws)) if fit.sigma_draws is not None else lik.sigma
    if lik.kind == "gaussian":
        return _GaussianScore(sigma)
    return _StudentTScore(lik.nu, sigma)


def estimate_sandwich(residuals, Phi, c: float = 1.34, weights=None,
                      ridge_lambda: float = 1e-2, loss=None) -> SandwichMatrices:
    """Plug-in Hessian I and score covariance J (Welsch with tuning ``c``
    unless ``loss`` supplies psi and psi'), with I ridged and
    eigenvalue-floored at 1e-3 * tr(I)."""
    r = np.asarray(residuals, dtype=float).ravel()
    Phi = np.asarray(getattr(Phi, "phi", Phi), dtype=float)
    n, p = Phi.shape
    if r.shape[0] != n:
        raise ValueError("residuals and Phi disagree on n")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if n <= p:
        warnings.warn(f"sandwich estimate with n={n} <= p={p} is unreliable", stacklevel=2)
    loss = loss or Welsch(c)
    i_raw = (Phi * (w * loss.psi_prime(r))[:, None]).T @ Phi / n
    j_hat = (Phi * (w * w * loss.psi(r) ** 2)[:, None]).T @ Phi / n
    i_raw = 0.5 * (i_raw + i_raw.T)
    j_hat = 0.5 * (j_hat + j_hat.T)
    min_eig_raw = float(np.linalg.eigvalsh(i_raw).min())
    i_hat = i_raw + ridge_lambda * np.trace(i_raw) * np.eye(p) / p
    tr = float(np.trace(i_hat))
    if not tr > 0:
        raise ValueError("trace of the Hessian estimate is not positive; contamination is too "
                         "severe or the basis is not identified")
    vals, vecs = np.linalg.eigh(i_hat)
    # the floor refers to the trace after clipping: solve f = EIG_FLOOR * sum(max(vals, f))
    floor = EIG_FLOOR * tr
    for _ in range(100):
        nxt = EIG_FLOOR * float(np.maximum(vals, floor).sum())
        if abs(nxt - floor) <= 1e-15 * tr:
            break
        floor = nxt
    vals = np.maximum(vals, floor)
    i_hat = (vecs * vals) @ vecs.T
    return SandwichMatrices(0.5 * (i_hat + i_hat.T), j_hat, ridge_lambda, min_eig_raw, i_raw)


def eta_trace(m: SandwichMatrices) -> float:
    inv = np.linalg.inv(m.i_hat)
    return float(np.trace(inv) / np.trace(inv @ m.j_hat @ inv))


def eta_functional(m: SandwichMatrices, a) -> float:
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise ValueError("contrast must be non-zero")
    inv = np.linalg.inv(m.i_hat)
    v = inv @ a
    return float((a @ v) / (v @ m.j_hat @ v))


@dataclass
class EtaReport:
    eta: float
    method: str
    min_eig_raw: float | None = None
    ridge_lambda: float | None = None
    per_functional: dict = field(default_factory=dict)
    pilot: PosteriorFit | None = field(default=None, repr=False)
    refit: PosteriorFit | None = field(default=None, repr=False)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"eta": self.eta, "method": self.method, "min_eig_raw": self.min_eig_raw,
                "ridge_lambda": self.ridge_lambda, "per_functional": self.per_functional,
                "flags": list(self.flags)}


def calibrate_eta_posterior(Phi, pseudo: PseudoOutcomes, lik: LikelihoodSpec, prior: PriorSpec,
                            sampler: SamplerConfig, seed: int, method: EtaMode | str = EtaMode.TRACE,
                            contrast=None, ridge_lambda: float = 1e-2) -> EtaReport:
    """Pilot fit at eta=1, sandwich at the pilot posterior mean, refit at eta-hat."""
    method = EtaMode(method)
    pilot = fit_posterior(Phi, pseudo, lik.with_eta(1.0), prior, sampler, seed=seed)
    beta_bar = pilot.beta_mean
    m = estimate_sandwich(pseudo.d - Phi @ beta_bar, Phi, pilot.effective_c, pseudo.weights, ridge_lambda,
                          loss=likelihood_score(pilot))
    per = {"trace": eta_trace(m)}
    if contrast is not None:
        per["contrast"] = eta_functional(m, contrast)
    eta = per["contrast"] if method is EtaMode.FUNCTIONAL else per["trace"]
    if not (np.isfinite(eta) and eta > 0):
        raise ValueError(f"calibrated eta is not a positive number ({eta})")
    flags = ["raw_hessian_indefinite"] if m.raw_indefinite else []
    r = pseudo.d - Phi @ beta_bar
    if lik.kind == "welsch" and np.mean(np.abs(r) >= pilot.effective_c / np.sqrt(2)) > 0.6:
        # most residuals sit where the Welsch loss is concave
        flags.append("residual_mass_outside_convex_region")
    refit = fit_posterior(Phi, pseudo, lik.with_eta(eta), prior, sampler, seed=seed)
    return EtaReport(eta, method.value, m.min_eig_raw, ridge_lambda, per, pilot, refit, flags)


def _stage(dataset: CausalDataset, config: FitConfig):
    log = StageLog()
    sev = resolve_severity(dataset, config, log)
    nuis = run_nuisance(dataset, config, sev, derive_seed(config.master_seed, "nuisance"))
    pseudo = make_pseudo(dataset, nuis, config, log)
    return sev, pseudo, design(config, dataset.X), log


def calibrate_eta(dataset: CausalDataset, config: FitConfig) -> EtaReport:
    method = config.calibrate_eta if config.calibrate_eta in (EtaMode.TRACE, EtaMode.FUNCTIONAL) else EtaMode.TRACE
    sev, pseudo, Phi, _ = _stage(dataset, config)
    return calibrate_eta_posterior(Phi, pseudo, effective_likelihood(config, sev), config.prior_for(Phi.shape[1]),
                                   config.sampler, derive_seed(config.master_seed, "posterior"), method,
                                   config.eta_contrast, config.ridge_lambda)


def bootstrap_point_variance(dataset: CausalDataset, config: FitConfig, severity, b_replicates: int,
                             delta: float) -> np.ndarray:
    """Per-coefficient variance of Huber point fits on re-cross-fitted DR
    pseudo-outcomes over nonparametric bootstrap resamples."""
    rng = np.random.default_rng(derive_seed(config.master_seed, "llb"))
    betas = []
    for b in range(b_replicates):
        idx = rng.integers(0, dataset.n, dataset.n)
        sub = dataset.subset(idx)
        if sub.w.min() == sub.w.max():
            continue
        nuis = run_nuisance(sub, config, severity, derive_seed(config.master_seed, "llb", b))
        pseudo = make_pseudo(sub, nuis, config, StageLog())
        betas.append(huber_regression(design(config, sub.X), pseudo.d, delta))
    if len(betas) < 2:
        raise ValueError("bootstrap produced fewer than two usable replicates")
    var = np.var(np.asarray(betas), axis=0, ddof=1)
    if not np.all(var > 0):
        raise ValueError("bootstrap variance is degenerate")
    return var


@dataclass
class LlbResult:
    eta: float
    grid: list
    posterior_var: list
    bootstrap_var: float


def calibrate_eta_llb(dataset: CausalDataset, config: FitConfig, b_replicates: int = 50,
                      eta_grid=(0.25, 0.5, 1.0, 2.0, 4.0)) -> LlbResult:
    """Grid eta whose mean posterior variance of beta is closest to the
    bootstrap variance of the robust point pipeline."""
    grid = [float(e) for e in eta_grid]
    if not grid:
        raise ValueError("eta grid is empty")
    if len(grid) == 1:
        return LlbResult(grid[0], grid, [], float("nan"))
    sev, pseudo, Phi, _ = _stage(dataset, config)
    target = float(np.mean(bootstrap_point_variance(dataset, config, sev, b_replicates, preset_delta(sev))))
    lik = effective_likelihood(config, sev)
    prior = config.prior_for(Phi.shape[1])
    seed = derive_seed(config.master_seed, "posterior")
    post_var = []
    for eta in grid:
        fit = fit_posterior(Phi, pseudo, lik.with_eta(eta), prior, config.sampler, seed=seed)
        post_var.append(float(np.mean(np.var(fit.draws.flat(), axis=0, ddof=1))))
    best = int(np.argmin(np.abs(np.asarray(post_var) - target)))
    return LlbResult(grid[best], grid, post_var, target)


@dataclass
class RbciResult:
    omega: float
    interval: tuple
    scores: dict
    intervals: dict


def rbci_omega(dataset: CausalDataset, config: FitConfig, omega_grid=(0.5, 1.0, 2.0),
               n_pseudo_truths: int = 200) -> RbciResult:
    """Pick the posterior temperature omega (eta = 1 / omega) whose ATE
    interval has the lowest mean Winkler score against bootstrap means of
    the pseudo-outcomes."""
    grid = [float(o) for o in omega_grid]
    if not grid:
        raise ValueError("omega grid is empty")
    sev, pseudo, Phi, _ = _stage(dataset, config)
    a = ate_contrast(Phi)
    lik = effective_likelihood(config, sev)
    prior = config.prior_for(Phi.shape[1])
    seed = derive_seed(config.master_seed, "posterior")
    rng = np.random.default_rng(derive_seed(config.master_seed, "rbci"))
    idx = rng.integers(0, pseudo.n, (n_pseudo_truths, pseudo.n))
    truths = pseudo.d[idx].mean(axis=1)
    scores, intervals = {}, {}
    for omega in grid:
        fit = fit_posterior(Phi, pseudo, lik.with_eta(1.0 / omega), prior, config.sampler, seed=seed)
        v = fit.draws.flat() @ a
        lo, hi = (float(q) for q in np.quantile(v, [0.025, 0.975]))
        intervals[omega] = (lo, hi)
        scores[omega] = float(np.mean([winkler_score(lo, hi, t) for t in truths]))
    best = min(grid, key=lambda o: (scores[o], o))
    return RbciResult(best, intervals[best], scores, intervals)
