"""End-to-end estimator: cross-fit nuisances, DR pseudo-outcomes, generalised posterior."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import evaluate_basis, format_basis
from .calibration import EtaReport, calibrate_eta_llb, calibrate_eta_posterior, rbci_omega
from .modular import PooledPosterior, modular_fit
from .nuisance import CausalDataset, NuisanceFits, Severity
from .posterior import CateSummary, PosteriorFit, fit_posterior, summarize_cate, summarize_contrast
from .pseudo import PseudoOutcomes
from .stages import (EtaMode, FitConfig, StageLog, ate_contrast, derive_seed, design, effective_likelihood,
                     make_pseudo, nuisance_delta, resolve_severity, run_nuisance)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.cause = exc


@dataclass
class FitResult:
    config: FitConfig
    severity: Severity
    nuisance: NuisanceFits = field(repr=False)
    pseudo: PseudoOutcomes = field(repr=False)
    Phi: np.ndarray = field(repr=False)
    posterior: PosteriorFit | PooledPosterior = field(repr=False)
    eta: float = 1.0
    calibration: EtaReport | dict | None = None
    warnings: list = field(default_factory=list)
    overlap_used: bool = False
    alpha_hat: float | None = None

    @property
    def pooled(self) -> bool:
        return isinstance(self.posterior, PooledPosterior)

    @property
    def diagnostics(self):
        """ChainDiagnostics, or a list of them for pooled fits."""
        return self.posterior.diagnostics

    def beta_draws(self) -> np.ndarray:
        return self.posterior.concatenated() if self.pooled else self.posterior.draws.flat()

    def contrast(self, a, level: float = 0.95) -> dict:
        if self.pooled:
            return self.posterior.contrast(a, level)
        return summarize_contrast(self.posterior, a, level)

    def ate(self, level: float = 0.95) -> dict:
        return self.contrast(ate_contrast(self.Phi), level)

    def summary(self) -> dict:
        """JSON-ready fit summary."""
        labels = self.config.basis.labels()
        beta = []
        for j, lab in enumerate(labels):
            e = np.zeros(len(labels))
            e[j] = 1.0
            beta.append({"term": lab, **self.contrast(e)})
        if self.pooled:
            diag = [d.to_dict() if d is not None else None for d in self.posterior.diagnostics]
        else:
            d = self.posterior.diagnostics
            diag = d.to_dict() if d is not None else None
        ate = self.ate()
        params = self.nuisance.outcome_params
        out = {
            "ate": {"mean": ate["mean"], "ci": ate["ci"]},
            "beta": beta,
            "diagnostics": diag,
            "eta": self.eta,
            "warnings": list(self.warnings),
            "nuisance": {
                "severity": self.severity.value,
                "loss": type(params.loss).__name__.lower(),
                "delta": nuisance_delta(params),
                "k_folds": self.config.k_folds,
                "y_scale": self.nuisance.y_scale,
                "overlap_weights": self.overlap_used,
            },
            "basis": format_basis(self.config.basis),
        }
        if self.alpha_hat is not None:
            out["nuisance"]["alpha_hat"] = self.alpha_hat
        if self.calibration is not None:
            cal = self.calibration
            out["calibration"] = cal.to_dict() if hasattr(cal, "to_dict") else cal
        if self.pooled:
            out["pooling"] = self.posterior.pooling.value
            out["m"] = self.posterior.m
        return out


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def fit(dataset: CausalDataset, config: FitConfig = FitConfig()) -> FitResult:
    log = StageLog()
    severity = _stage("severity", resolve_severity, dataset, config, log)
    Phi = _stage("basis", design, config, dataset.X)
    nuisance = _stage("nuisance", run_nuisance, dataset, config, severity, derive_seed(config.master_seed, "nuisance"))
    pseudo = _stage("pseudo", make_pseudo, dataset, nuisance, config, log)
    lik = effective_likelihood(config, severity)
    prior = config.prior_for(Phi.shape[1])
    seed = derive_seed(config.master_seed, "posterior")
    eta, calibration = lik.eta, None
    mode = config.calibrate_eta

    if mode is EtaMode.LLB:
        res = _stage("calibration", calibrate_eta_llb, dataset, config, config.llb_replicates, config.llb_grid)
        eta = res.eta
        calibration = {"eta": eta, "method": "llb", "grid": res.grid, "posterior_var": res.posterior_var,
                       "bootstrap_var": res.bootstrap_var}
    elif mode is EtaMode.RBCI:
        res = _stage("calibration", rbci_omega, dataset, config, config.rbci_grid, config.rbci_replicates)
        eta = 1.0 / res.omega
        calibration = {"eta": eta, "method": "rbci", "omega": res.omega,
                       "scores": {str(k): v for k, v in res.scores.items()}}

    if config.modular is not None:
        cfg = config if mode in (EtaMode.TRACE, EtaMode.FUNCTIONAL) else config.with_(
            likelihood=config.likelihood.with_eta(eta))
        posterior = _stage("modular", modular_fit, dataset, cfg)
        if mode in (EtaMode.TRACE, EtaMode.FUNCTIONAL):
            eta = float(np.mean(posterior.etas))
            calibration = {"eta": eta, "method": mode.value, "per_m": posterior.etas}
        for j, d in enumerate(posterior.diagnostics):
            if d is not None and np.any(d.r_hat >= 1.05):
                log.warnings.append(f"WARN.MCMC modular draw {j}: R-hat {d.r_hat.max():.3f} >= 1.05")
    elif mode in (EtaMode.TRACE, EtaMode.FUNCTIONAL):
        rep = _stage("calibration", calibrate_eta_posterior, Phi, pseudo, lik, prior, config.sampler, seed, mode,
                     config.eta_contrast, config.ridge_lambda)
        posterior, eta, calibration = rep.refit, rep.eta, rep
        if "raw_hessian_indefinite" in rep.flags:
            log.warnings.append("WARN.ETA raw Hessian estimate was indefinite; eigenvalue floor applied")
        if "residual_mass_outside_convex_region" in rep.flags:
            log.warnings.append("WARN.ETA over 60% of residuals lie outside |r| < c/sqrt(2); "
                                "consider a larger c or overlap weights")
    else:
        posterior = _stage("posterior", fit_posterior, Phi, pseudo, lik.with_eta(eta), prior, config.sampler, seed)

    if not isinstance(posterior, PooledPosterior) and posterior.diagnostics is not None:
        d = posterior.diagnostics
        if np.any(d.r_hat >= 1.05):
            log.warnings.append(f"WARN.MCMC R-hat {d.r_hat.max():.3f} >= 1.05")
        if d.divergences:
            log.warnings.append(f"WARN.MCMC {d.divergences} divergent transitions")

    return FitResult(config, severity, nuisance, pseudo, Phi, posterior, float(eta), calibration,
                     log.warnings, log.overlap_used, log.alpha_hat)


def predict_cate(result: FitResult, X_new, level: float = 0.95) -> CateSummary:
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if result.pooled:
        Phi = evaluate_basis(result.config.basis, X_new).phi
        mean, ci = result.posterior.tau(Phi, level)
        return CateSummary(mean, ci, [], [])
    return summarize_cate(result.posterior.draws, result.config.basis, X_new, level)
