"""Fit configuration and the individual pipeline stages it drives."""
from __future__ import annotations

import enum
import hashlib
import warnings as _warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisSpec, evaluate_basis
from .gbt import GbtParams
from .nuisance import SEVERITY_DELTA, SEVERITY_WELSCH_C, CausalDataset, NuisanceFits, Severity, cross_fit, severity_to_config
from .posterior import LikelihoodSpec, PriorSpec, SamplerConfig
from .pseudo import PseudoOutcomes, dr_pseudo_outcomes, overlap_weights
from .tails import auto_severity, normalize_extremes, propensity_warnings


class EtaMode(str, enum.Enum):
    OFF = "off"
    TRACE = "trace"
    FUNCTIONAL = "functional"
    LLB = "llb"
    RBCI = "rbci"


class Pooling(str, enum.Enum):
    CONCATENATE = "concatenate"
    RUBIN = "rubin"


@dataclass(frozen=True)
class ModularConfig:
    m: int = 8
    pooling: Pooling = Pooling.CONCATENATE

    def __post_init__(self):
        object.__setattr__(self, "pooling", Pooling(self.pooling))
        if self.m < 2:
            raise ValueError("modular pooling needs m >= 2")


@dataclass(frozen=True)
class FitConfig:
    """Everything a fit needs besides the data.

    ``severity`` may be ``"auto"`` to pick a preset from the tail index of a
    quick residual fit. ``use_overlap=None`` turns overlap weights on only when
    estimated propensities leave [0.02, 0.98]. ``prior=None`` picks the
    Student-t default for the basis size.
    """

    severity: Severity | str = Severity.NONE
    basis: BasisSpec = BasisSpec.intercept()
    likelihood: LikelihoodSpec = LikelihoodSpec()
    prior: PriorSpec | None = None
    k_folds: int = 2
    use_overlap: bool | None = None
    normalize_y_for_nuisance: bool = False
    calibrate_eta: EtaMode | str = EtaMode.OFF
    eta_contrast: tuple | None = None
    ridge_lambda: float = 1e-2
    llb_grid: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    llb_replicates: int = 50
    rbci_grid: tuple = (0.5, 1.0, 2.0)
    rbci_replicates: int = 200
    modular: ModularConfig | None = None
    sampler: SamplerConfig = SamplerConfig()
    master_seed: int = 0
    severity_sets_welsch_c: bool = False
    gbt_overrides: dict | None = None
    extremes: tuple | None = None  # (threshold, alpha) enables normalize_extremes

    def __post_init__(self):
        if self.severity != "auto":
            object.__setattr__(self, "severity", Severity(self.severity))
        object.__setattr__(self, "calibrate_eta", EtaMode(self.calibrate_eta))
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.calibrate_eta is EtaMode.FUNCTIONAL and self.eta_contrast is None:
            raise ValueError("functional eta calibration needs eta_contrast")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be non-negative")

    def with_(self, **kw) -> "FitConfig":
        return replace(self, **kw)

    def prior_for(self, p: int) -> PriorSpec:
        return self.prior or PriorSpec.default_for(p)


def derive_seed(master: int, *keys) -> int:
    """Stable 32-bit seed from a master seed and any hashable labels."""
    text = "/".join([str(int(master))] + [str(k) for k in keys])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


@dataclass
class StageLog:
    severity: Severity = Severity.NONE
    alpha_hat: float | None = None
    overlap_used: bool = False
    warnings: list = field(default_factory=list)


def resolve_severity(dataset: CausalDataset, config: FitConfig, log: StageLog) -> Severity:
    if config.severity == "auto":
        rec = auto_severity(dataset, GbtParams(seed=derive_seed(config.master_seed, "autosev")))
        log.alpha_hat = rec.alpha_hat
        log.warnings.extend(rec.warnings)
        log.warnings.append(f"WARN.AUTOSEV auto severity selected {rec.severity.value}"
                            + (f" (alpha_hat={rec.alpha_hat:.2f})" if rec.alpha_hat is not None else ""))
        log.severity = rec.severity
    else:
        log.severity = config.severity
    return log.severity


def outcome_params(config: FitConfig, severity: Severity) -> GbtParams:
    return severity_to_config(severity, config.gbt_overrides)


def effective_likelihood(config: FitConfig, severity: Severity) -> LikelihoodSpec:
    lik = config.likelihood
    if config.severity_sets_welsch_c and lik.kind == "welsch":
        lik = replace(lik, c=SEVERITY_WELSCH_C[severity])
    return lik


def nuisance_delta(params: GbtParams) -> float | None:
    return getattr(params.loss, "delta", None)


def run_nuisance(dataset: CausalDataset, config: FitConfig, severity: Severity, seed: int,
                 sample_weights=None, folds=None) -> NuisanceFits:
    return cross_fit(dataset, outcome_params(config, severity), k_folds=config.k_folds,
                     standardize_y=config.normalize_y_for_nuisance, rng_seed=seed,
                     sample_weights=sample_weights, folds=folds)


def make_pseudo(dataset: CausalDataset, nuisance: NuisanceFits, config: FitConfig,
                log: StageLog) -> PseudoOutcomes:
    pseudo = dr_pseudo_outcomes(dataset, nuisance)
    check = propensity_warnings(nuisance.pi_hat)
    for msg in check.warnings:
        if msg not in log.warnings:
            log.warnings.append(msg)
    use = config.use_overlap if config.use_overlap is not None else check.auto_overlap
    if use:
        pseudo = pseudo.with_weights(overlap_weights(nuisance.pi_hat))
        if config.use_overlap is None and "WARN.OVERLAP overlap weights enabled automatically" not in log.warnings:
            log.warnings.append("WARN.OVERLAP overlap weights enabled automatically")
    log.overlap_used = bool(use)
    if config.extremes is not None:
        t, a = config.extremes
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore")
            pseudo = normalize_extremes(pseudo, t, a)
        msg = f"WARN.EXTREMES normalize_extremes active (t={t:g}, alpha={a:g}); tail effects are shrunk"
        if msg not in log.warnings:
            log.warnings.append(msg)
    return pseudo


def design(config: FitConfig, X) -> np.ndarray:
    return evaluate_basis(config.basis, X).phi


def ate_contrast(Phi) -> np.ndarray:
    """Contrast a with a^T beta = mean over units of phi(x)^T beta."""
    return np.asarray(Phi, dtype=float).mean(axis=0)


def huber_regression(Phi, d, delta: float = 1.345, iters: int = 100) -> np.ndarray:
    """Huber M-estimate of D on Phi with MAD scale, by IRLS."""
    Phi = np.asarray(Phi, dtype=float)
    d = np.asarray(d, dtype=float)
    beta, *_ = np.linalg.lstsq(Phi, d, rcond=None)
    r0 = d - np.median(d)
    scale = np.median(np.abs(r0 - np.median(r0))) / 0.6745
    for _ in range(iters):
        r = d - Phi @ beta
        s = np.median(np.abs(r - np.median(r))) / 0.6745
        scale = s if s > 0 else scale
        if not scale > 0:
            break
        k = delta * scale
        a = np.abs(r)
        u = np.sqrt(np.where(a <= k, 1.0, k / np.maximum(a, 1e-300)))
        new, *_ = np.linalg.lstsq(Phi * u[:, None], d * u, rcond=None)
        if np.allclose(new, beta, rtol=1e-10, atol=1e-12):
            return new
        beta = new
    return beta


def preset_delta(severity: Severity) -> float:
    return SEVERITY_DELTA.get(severity, 1.345)
