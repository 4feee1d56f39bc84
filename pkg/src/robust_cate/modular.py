"""Modular (cut) Bayes: nuisance uncertainty by Bayesian bootstrap, pooled
second-stage posteriors, and the cross-fit dispersion diagnostic."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .nuisance import CausalDataset, stratified_folds
from .calibration import calibrate_eta_posterior
from .posterior import fit_posterior
from .stages import (EtaMode, FitConfig, ModularConfig, Pooling, StageLog, derive_seed, design, effective_likelihood,
                     make_pseudo, resolve_severity, run_nuisance)


def bayesian_bootstrap_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet(1, ..., 1) weights scaled to sum to n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.ones(1)
    g = rng.standard_exponential(n)
    return g * (n / g.sum())


@dataclass
class PooledPosterior:
    per_m_draws: list
    pooling: Pooling
    pooled_mean: np.ndarray
    pooled_var: np.ndarray
    diagnostics: list = field(default_factory=list)
    etas: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.per_m_draws)

    def concatenated(self) -> np.ndarray:
        return np.concatenate([d.flat() for d in self.per_m_draws], axis=0)

    def contrast(self, a, level: float = 0.95) -> dict:
        """Mean, sd and interval of a^T beta under the chosen pooling rule."""
        a = np.asarray(a, dtype=float)
        if self.pooling is Pooling.CONCATENATE:
            v = self.concatenated() @ a
            lo, hi = np.quantile(v, [(1 - level) / 2, (1 + level) / 2])
            return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)), "ci": [float(lo), float(hi)]}
        means = np.array([float((d.flat() @ a).mean()) for d in self.per_m_draws])
        within = np.array([float((d.flat() @ a).var(ddof=1)) for d in self.per_m_draws])
        mean, var = rubin_pool(means, within)
        z = norm.ppf((1 + level) / 2)
        sd = float(np.sqrt(var))
        return {"mean": float(mean), "sd": sd, "ci": [float(mean - z * sd), float(mean + z * sd)]}

    def tau(self, Phi_eval, level: float = 0.95):
        Phi_eval = np.asarray(Phi_eval, dtype=float)
        if self.pooling is Pooling.CONCATENATE:
            t = self.concatenated() @ Phi_eval.T
            lo, hi = np.quantile(t, [(1 - level) / 2, (1 + level) / 2], axis=0)
            return t.mean(axis=0), (lo, hi)
        per = [d.flat() @ Phi_eval.T for d in self.per_m_draws]
        mean, var = rubin_pool(np.array([t.mean(axis=0) for t in per]),
                               np.array([t.var(axis=0, ddof=1) for t in per]))
        z = norm.ppf((1 + level) / 2)
        sd = np.sqrt(var)
        return mean, (mean - z * sd, mean + z * sd)


def rubin_pool(means, within_vars):
    """Rubin's rules: mean of means and W + (1 + 1/M) B."""
    means = np.asarray(means, dtype=float)
    within_vars = np.asarray(within_vars, dtype=float)
    M = means.shape[0]
    if M < 2:
        raise ValueError("Rubin pooling needs at least two imputations")
    between = means.var(axis=0, ddof=1)
    return means.mean(axis=0), within_vars.mean(axis=0) + (1.0 + 1.0 / M) * between


def pool_draws(per_m: list, pooling: Pooling | str) -> PooledPosterior:
    pooling = Pooling(pooling)
    flats = [d.flat() for d in per_m]
    if pooling is Pooling.CONCATENATE:
        allv = np.concatenate(flats, axis=0)
        mean, var = allv.mean(axis=0), allv.var(axis=0, ddof=1)
    else:
        mean, var = rubin_pool(np.array([f.mean(axis=0) for f in flats]),
                               np.array([f.var(axis=0, ddof=1) for f in flats]))
    return PooledPosterior(list(per_m), pooling, mean, var)


def modular_fit(dataset: CausalDataset, config: FitConfig, m: int | None = None,
                pooling: Pooling | str | None = None, weights_override=None) -> PooledPosterior:
    """M bootstrap-weighted nuisance refits on fixed folds, one second-stage
    posterior per refit, pooled.

    Bootstrap weights enter the nuisance fits only; the second-stage
    likelihood of each refit is unweighted by them. ``weights_override``
    (an M x n array) replaces the Dirichlet draws.
    """
    mc = config.modular or ModularConfig()
    m = mc.m if m is None else m
    pooling = mc.pooling if pooling is None else Pooling(pooling)
    if m < 2:
        raise ValueError("modular_fit needs m >= 2")
    log = StageLog()
    sev = resolve_severity(dataset, config, log)
    folds = stratified_folds(dataset.w, config.k_folds,
                             np.random.default_rng(derive_seed(config.master_seed, "folds")))
    Phi = design(config, dataset.X)
    lik = effective_likelihood(config, sev)
    prior = config.prior_for(Phi.shape[1])
    per_m, diags, etas = [], [], []
    for j in range(m):
        try:
            if weights_override is not None:
                bw = np.asarray(weights_override[j], dtype=float)
            else:
                bw = bayesian_bootstrap_weights(dataset.n, np.random.default_rng(derive_seed(config.master_seed, "bb", j)))
            nuis = run_nuisance(dataset, config, sev, derive_seed(config.master_seed, "nuisance", j),
                                sample_weights=bw, folds=folds)
            pseudo = make_pseudo(dataset, nuis, config, log)
            seed = derive_seed(config.master_seed, "posterior", j)
            if config.calibrate_eta in (EtaMode.TRACE, EtaMode.FUNCTIONAL):
                rep = calibrate_eta_posterior(Phi, pseudo, lik, prior, config.sampler, seed, config.calibrate_eta,
                                              config.eta_contrast, config.ridge_lambda)
                fit, eta = rep.refit, rep.eta
            else:
                fit, eta = fit_posterior(Phi, pseudo, lik, prior, config.sampler, seed=seed), lik.eta
        except Exception as exc:
            raise RuntimeError(f"modular draw m={j} failed: {exc}") from exc
        per_m.append(fit.draws)
        diags.append(fit.diagnostics)
        etas.append(eta)
    pooled = pool_draws(per_m, pooling)
    pooled.diagnostics = diags
    pooled.etas = etas
    return pooled


def dispersion_ratio(dataset: CausalDataset, config: FitConfig, k_repeats: int = 5, seeds=None) -> float:
    """Std over repeats of the posterior-mean ATE divided by the mean ATE CI
    width; each repeat re-runs the whole fit with a fresh master seed."""
    from .pipeline import fit

    seeds = list(seeds) if seeds is not None else [derive_seed(config.master_seed, "repeat", r) for r in range(k_repeats)]
    if len(seeds) < 2:
        raise ValueError("dispersion ratio needs at least two repeats")
    means, widths = [], []
    for s in seeds:
        res = fit(dataset, config.with_(master_seed=s))
        ate = res.ate()
        means.append(ate["mean"])
        widths.append(ate["ci"][1] - ate["ci"][0])
    w = float(np.mean(widths))
    if not w > 0:
        raise ValueError("mean interval width is zero")
    return float(np.std(means, ddof=1) / w)
