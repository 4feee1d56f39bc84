"""Phase 2: doubly robust pseudo-outcomes and overlap weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nuisance import CausalDataset, NuisanceFits


@dataclass
class PseudoOutcomes:
    d: np.ndarray
    weights: np.ndarray
    source_arm: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.source_arm = np.asarray(self.source_arm)
        if not (self.d.shape == self.weights.shape == self.source_arm.shape):
            raise ValueError("d, weights and source_arm must have equal length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        if not np.all(np.isfinite(self.d)):
            raise ValueError("pseudo-outcomes must be finite")

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def with_weights(self, weights) -> "PseudoOutcomes":
        return PseudoOutcomes(self.d, np.asarray(weights, dtype=float), self.source_arm)


def dr_pseudo_outcomes(dataset: CausalDataset, nuisance: NuisanceFits) -> PseudoOutcomes:
    """Per-arm DR targets on the original outcome scale.

    Treated: mu1 - mu0 + (Y - mu1) / pi.  Control: mu1 - mu0 - (Y - mu0) / (1 - pi).
    """
    pi = nuisance.pi_hat
    if pi.shape[0] != dataset.n:
        raise ValueError("nuisance fits do not cover the dataset")
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise ValueError("propensity at 0 or 1; check clipping")
    s = nuisance.y_scale
    y = dataset.y / s
    mu0, mu1 = nuisance.mu0_hat, nuisance.mu1_hat
    base = mu1 - mu0
    treated = dataset.w == 1
    d = np.where(treated, base + (y - mu1) / pi, base - (y - mu0) / (1.0 - pi))
    return PseudoOutcomes(d * s, np.ones(dataset.n), dataset.w.astype(int))


def overlap_weights(pi_hat) -> np.ndarray:
    """pi (1 - pi), normalised to mean one."""
    pi = np.asarray(pi_hat, dtype=float)
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise ValueError("propensities must lie strictly inside (0, 1)")
    w = pi * (1.0 - pi)
    return w / w.mean()
