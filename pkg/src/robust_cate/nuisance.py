"""Phase 1: cross-fitted outcome and propensity models."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .gbt import GbtParams, default_propensity_params, fit_gbt, fit_propensity
from .losses import Huber, LossKind, SquaredError, mad


@dataclass(frozen=True)
class CausalDataset:
    X: np.ndarray
    w: np.ndarray
    y: np.ndarray
    tau_true: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        w = np.asarray(self.w, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if not (X.shape[0] == w.shape[0] == y.shape[0]):
            raise ValueError("X, w and y must have the same number of rows")
        if not np.all((w == 0) | (w == 1)):
            raise ValueError("treatment must be binary 0/1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)
        if self.tau_true is not None:
            object.__setattr__(self, "tau_true", np.asarray(self.tau_true, dtype=float).ravel())

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "CausalDataset":
        tau = None if self.tau_true is None else self.tau_true[idx]
        return CausalDataset(self.X[idx], self.w[idx], self.y[idx], tau)


class Severity(str, enum.Enum):
    NONE = "none"
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"


SEVERITY_DELTA = {Severity.MILD: 1.345, Severity.MODERATE: 1.0, Severity.SEVERE: 0.5}
SEVERITY_WELSCH_C = {Severity.NONE: 1.34, Severity.MILD: 1.34, Severity.MODERATE: 1.0, Severity.SEVERE: 0.5}


def severity_loss(preset: Severity | str) -> LossKind:
    preset = Severity(preset)
    if preset is Severity.NONE:
        return SquaredError()
    return Huber(SEVERITY_DELTA[preset])


def severity_to_config(preset: Severity | str, overrides: dict | None = None, seed: int = 0) -> GbtParams:
    """Outcome-model parameters for a severity preset; explicit ``overrides``
    (any GbtParams field, including ``loss``) win over the preset."""
    params = GbtParams(loss=severity_loss(preset), seed=seed)
    if overrides:
        params = replace(params, **overrides)
    return params


@dataclass
class NuisanceFits:
    """Out-of-fold nuisance predictions.

    ``mu0_hat`` and ``mu1_hat`` are on the fitting scale, i.e. divided by
    ``y_scale`` when the outcome was pre-standardised.
    """

    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    pi_hat: np.ndarray
    fold_assignment: np.ndarray
    y_scale: float = 1.0
    outcome_params: GbtParams | None = None
    clip: tuple[float, float] = (0.01, 0.99)
    train_index: list[np.ndarray] = field(default_factory=list, repr=False)


def stratified_folds(w: np.ndarray, k_folds: int, rng: np.random.Generator) -> np.ndarray:
    folds = np.empty(w.shape[0], dtype=np.int64)
    for arm in (0, 1):
        idx = np.flatnonzero(w == arm)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = np.arange(idx.size) % k_folds
    return folds


def cross_fit(
    dataset: CausalDataset,
    severity: Severity | str | GbtParams = Severity.NONE,
    k_folds: int = 2,
    standardize_y: bool = False,
    rng_seed: int = 0,
    sample_weights=None,
    folds: np.ndarray | None = None,
    propensity_params: GbtParams | None = None,
    clip: tuple[float, float] = (0.01, 0.99),
) -> NuisanceFits:
    """K-fold cross-fitting of mu0, mu1 (per-arm regressions) and pi.

    Every unit's predictions come from models trained on the other folds.
    ``sample_weights`` enter every nuisance fit (Bayesian bootstrap hook).
    """
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    if isinstance(severity, GbtParams):
        out_params = replace(severity, seed=rng_seed)
    else:
        out_params = severity_to_config(severity, seed=rng_seed)
    prop_params = propensity_params or default_propensity_params(seed=rng_seed)
    X, w, y = dataset.X, dataset.w, dataset.y
    if w.min() == w.max():
        raise ValueError("dataset has a single treatment arm")
    sw = np.ones(dataset.n) if sample_weights is None else np.asarray(sample_weights, dtype=float)

    y_scale = mad(y, consistency_scaled=True) if standardize_y else 1.0
    yt = y / y_scale

    rng = np.random.default_rng(rng_seed)
    if folds is None:
        folds = stratified_folds(w, k_folds, rng)
    folds = np.asarray(folds)
    k_folds = int(folds.max()) + 1
    for k in range(k_folds):
        held, train = folds == k, folds != k
        for arm, name in ((1, "treated"), (0, "control")):
            if not np.any(w[train] == arm) or not np.any(w[held] == arm):
                raise ValueError(f"fold {k} has no {name} units")

    mu0 = np.empty(dataset.n)
    mu1 = np.empty(dataset.n)
    pi = np.empty(dataset.n)
    train_index = []
    for k in range(k_folds):
        held = np.flatnonzero(folds == k)
        train = np.flatnonzero(folds != k)
        train_index.append(train)
        tr0 = train[w[train] == 0]
        tr1 = train[w[train] == 1]
        m0 = fit_gbt(X[tr0], yt[tr0], out_params, sample_weights=sw[tr0])
        m1 = fit_gbt(X[tr1], yt[tr1], out_params, sample_weights=sw[tr1])
        pm = fit_propensity(X[train], w[train], prop_params, sample_weights=sw[train], clip=clip)
        mu0[held] = m0.predict(X[held])
        mu1[held] = m1.predict(X[held])
        pi[held] = pm.predict_proba(X[held])
    return NuisanceFits(mu0, mu1, pi, folds, y_scale, out_params, clip, train_index)
