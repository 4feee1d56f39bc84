"""Generalised log-densities for the second-stage regression of D on Phi."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..losses import MAD_CONSISTENCY, Tukey, Welsch, WELSCH_C, TUKEY_C, mad

KINDS = ("welsch", "gaussian", "student_t", "tukey")


@dataclass(frozen=True)
class LikelihoodSpec:
    """Pseudo-likelihood for the regression of D on Phi.

    ``c`` tunes Welsch/Tukey, ``sigma``/``nu`` the Gaussian and Student-t
    kinds. Gaussian and Student-t infer sigma (half-Cauchy(1) prior on
    sigma, sampled on the log scale) unless ``sigma_fixed``.
    """

    kind: str = "welsch"
    c: float = WELSCH_C
    sigma: float = 1.0
    nu: float = 3.0
    sigma_fixed: bool = False
    eta: float = 1.0
    mad_rescale: bool = False
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown likelihood kind {self.kind!r}")
        if not (self.eta > 0 and np.isfinite(self.eta)):
            raise ValueError("eta must be positive")
        if self.c <= 0 or self.sigma <= 0 or self.nu <= 0:
            raise ValueError("likelihood constants must be positive")

    @classmethod
    def welsch(cls, c: float = WELSCH_C, **kw) -> "LikelihoodSpec":
        return cls("welsch", c=c, **kw)

    @classmethod
    def gaussian(cls, sigma: float | None = None, **kw) -> "LikelihoodSpec":
        if sigma is None:
            return cls("gaussian", **kw)
        return cls("gaussian", sigma=sigma, sigma_fixed=True, **kw)

    @classmethod
    def student_t(cls, nu: float = 3.0, sigma: float | None = None, **kw) -> "LikelihoodSpec":
        if sigma is None:
            return cls("student_t", nu=nu, **kw)
        return cls("student_t", nu=nu, sigma=sigma, sigma_fixed=True, **kw)

    @classmethod
    def tukey(cls, c: float = TUKEY_C, **kw) -> "LikelihoodSpec":
        return cls("tukey", c=c, **kw)

    @property
    def infers_sigma(self) -> bool:
        return self.kind in ("gaussian", "student_t") and not self.sigma_fixed

    def with_eta(self, eta: float) -> "LikelihoodSpec":
        return replace(self, eta=float(eta))


@dataclass(frozen=True)
class PriorSpec:
    family: str = "student_t"
    scale: float = 10.0
    nu: float = 3.0

    def __post_init__(self):
        if self.family not in ("student_t", "gaussian"):
            raise ValueError(f"unknown prior family {self.family!r}")
        if not self.scale > 0:
            raise ValueError("prior scale must be positive")

    @classmethod
    def default_for(cls, p: int) -> "PriorSpec":
        return cls(scale=2.0 if p >= 10 else 10.0)

    def logp_grad(self, beta):
        s2 = self.scale**2
        if self.family == "gaussian":
            return -0.5 * float(beta @ beta) / s2, -beta / s2
        nu = self.nu
        lp = -0.5 * (nu + 1.0) * float(np.log1p(beta**2 / (nu * s2)).sum())
        return lp, -(nu + 1.0) * beta / (nu * s2 + beta**2)


class GeneralisedPosterior:
    """log p(theta | D) up to a constant, with its analytic gradient.

    theta = beta, followed by log(sigma) when the likelihood infers sigma.
    The likelihood part is ``-eta * sum_i w_i * loss(r_i)``.
    """

    def __init__(self, Phi, d, lik: LikelihoodSpec = LikelihoodSpec(), prior: PriorSpec = PriorSpec(),
                 weights=None):
        self.Phi = np.asarray(getattr(Phi, "phi", Phi), dtype=float)
        dv = np.asarray(getattr(d, "d", d), dtype=float)
        if weights is None:
            weights = lik.weights if lik.weights is not None else getattr(d, "weights", None)
        self.w = np.ones(dv.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        if self.Phi.ndim != 2 or self.Phi.shape[0] != dv.shape[0] or self.w.shape != dv.shape:
            raise ValueError("Phi, D and weights have inconsistent shapes")
        self.d = dv
        self.lik = lik
        self.prior = prior
        self.p = self.Phi.shape[1]
        self.dim = self.p + (1 if lik.infers_sigma else 0)
        c = lik.c
        if lik.mad_rescale and lik.kind in ("welsch", "tukey"):
            c = c * mad(dv, consistency_scaled=False) / MAD_CONSISTENCY
        self.c = c
        self._loss = Welsch(c) if lik.kind == "welsch" else Tukey(c) if lik.kind == "tukey" else None
        self._fused = hasattr(self._loss, "rho_psi")
        self._eta_w = lik.eta * self.w
        self._phi_t = np.ascontiguousarray(self.Phi.T)

    def residuals(self, beta):
        return self.d - self.Phi @ beta

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"expected parameter vector of length {self.dim}")
        if not np.isfinite(theta).all():
            raise ValueError("parameters must be finite")
        beta = theta[: self.p]
        r = self.d - self.Phi @ beta
        eta, w, lik = self.lik.eta, self.w, self.lik
        if self._loss is not None:
            if self._fused:
                rho, psi = self._loss.rho_psi(r)
            else:
                rho, psi = self._loss.rho(r), self._loss.psi(r)
            ll = -float(self._eta_w @ rho)
            lp_prior, g_prior = self.prior.logp_grad(beta)
            return ll + lp_prior, self._phi_t @ (self._eta_w * psi) + g_prior
        grad = np.zeros(self.dim)
        if lik.infers_sigma:
            s = theta[self.p]
            sigma = np.exp(s)
        else:
            s, sigma = np.log(lik.sigma), lik.sigma
        sw = float(w.sum())
        if lik.kind == "gaussian":
            z2 = r * r / (sigma * sigma)
            ll = -eta * (0.5 * float(w @ z2) + sw * s)
            grad[: self.p] = self.Phi.T @ (eta * w * r / (sigma * sigma))
            ds = eta * (float(w @ z2) - sw)
        else:
            nu = lik.nu
            q = r * r / (nu * sigma * sigma)
            ll = -eta * (0.5 * (nu + 1.0) * float(w @ np.log1p(q)) + sw * s)
            grad[: self.p] = self.Phi.T @ (eta * w * (nu + 1.0) * r / (nu * sigma * sigma + r * r))
            ds = eta * ((nu + 1.0) * float(w @ (q / (1.0 + q))) - sw)
        if lik.infers_sigma:
            # half-Cauchy(1) on sigma plus the log-transform Jacobian
            ll += -np.log1p(sigma * sigma) + s
            grad[self.p] = ds - 2.0 * sigma * sigma / (1.0 + sigma * sigma) + 1.0
        lp_prior, g_prior = self.prior.logp_grad(beta)
        grad[: self.p] += g_prior
        return ll + lp_prior, grad


def log_density_and_grad(theta, Phi, d, lik: LikelihoodSpec = LikelihoodSpec(),
                         prior: PriorSpec = PriorSpec()):
    return GeneralisedPosterior(Phi, d, lik, prior)(theta)
