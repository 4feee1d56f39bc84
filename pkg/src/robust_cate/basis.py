"""Declarative CATE bases, threshold search and model averaging over thresholds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

DEFAULT_THRESHOLDS = (1.0, 1.25, 1.5, 1.75, 1.96, 2.25, 2.5, 3.0)


@dataclass(frozen=True)
class Intercept:
    def column(self, X):
        return np.ones(X.shape[0])

    def label(self):
        return "1"


@dataclass(frozen=True)
class Linear:
    feature: int

    def column(self, X):
        return X[:, self.feature]

    def label(self):
        return f"x{self.feature}"


@dataclass(frozen=True)
class Power:
    feature: int
    degree: int

    def column(self, X):
        return X[:, self.feature] ** self.degree

    def label(self):
        return f"x{self.feature}^{self.degree}"


@dataclass(frozen=True)
class TailIndicator:
    feature: int
    threshold: float
    two_sided: bool = True

    def column(self, X):
        x = X[:, self.feature]
        return ((np.abs(x) if self.two_sided else x) > self.threshold).astype(float)

    def label(self):
        lhs = f"|x{self.feature}|" if self.two_sided else f"x{self.feature}"
        return f"1({lhs}>{self.threshold:g})"


@dataclass(frozen=True)
class SplineKnot:
    """Truncated linear term (x_f - knot)_+."""

    feature: int
    knot: float

    def column(self, X):
        return np.maximum(X[:, self.feature] - self.knot, 0.0)

    def label(self):
        return f"(x{self.feature}-{self.knot:g})+"


Term = Union[Intercept, Linear, Power, TailIndicator, SplineKnot]


@dataclass(frozen=True)
class BasisSpec:
    terms: tuple = (Intercept(),)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(self.terms) < 1:
            raise ValueError("a basis needs at least one term")

    @property
    def p(self) -> int:
        return len(self.terms)

    def labels(self) -> list[str]:
        return [t.label() for t in self.terms]

    def max_feature(self) -> int:
        return max((getattr(t, "feature", -1) for t in self.terms), default=-1)

    @classmethod
    def intercept(cls) -> "BasisSpec":
        return cls((Intercept(),))

    @classmethod
    def tail(cls, threshold: float = 1.96, feature: int = 0, two_sided: bool = True) -> "BasisSpec":
        return cls((Intercept(), TailIndicator(feature, threshold, two_sided)))


@dataclass
class DesignMatrix:
    phi: np.ndarray
    spec: BasisSpec


def evaluate_basis(spec: BasisSpec, X) -> DesignMatrix:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    top = spec.max_feature()
    if top >= X.shape[1]:
        raise ValueError(f"basis uses feature {top} but X has {X.shape[1]} columns")
    phi = np.column_stack([t.column(X) for t in spec.terms]).astype(float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("basis evaluation produced non-finite entries")
    return DesignMatrix(phi, spec)


def parse_basis(text: str) -> BasisSpec:
    """Parse ``"1, x0, x0^2, tail(0, 1.96), tail1(0, 2.0), knot(0, 0.5)"``.

    ``tail`` is two-sided, ``tail1`` one-sided.
    """
    terms = []
    for tok in _split_terms(text):
        tok = tok.strip().replace(" ", "")
        if tok in ("1", "intercept"):
            terms.append(Intercept())
        elif tok.startswith(("tail(", "tail1(", "knot(")):
            name, args = tok[:-1].split("(", 1)
            f, v = args.split(",")
            if name == "knot":
                terms.append(SplineKnot(int(f), float(v)))
            else:
                terms.append(TailIndicator(int(f), float(v), two_sided=(name == "tail")))
        elif tok.startswith("x"):
            if "^" in tok:
                f, deg = tok[1:].split("^")
                terms.append(Power(int(f), int(deg)))
            else:
                terms.append(Linear(int(tok[1:])))
        else:
            raise ValueError(f"cannot parse basis term {tok!r}")
    return BasisSpec(tuple(terms))


def _split_terms(text: str) -> list[str]:
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur)
    return out


def format_basis(spec: BasisSpec) -> str:
    parts = []
    for t in spec.terms:
        if isinstance(t, Intercept):
            parts.append("1")
        elif isinstance(t, Linear):
            parts.append(f"x{t.feature}")
        elif isinstance(t, Power):
            parts.append(f"x{t.feature}^{t.degree}")
        elif isinstance(t, TailIndicator):
            parts.append(f"{'tail' if t.two_sided else 'tail1'}({t.feature},{t.threshold!r})")
        else:
            parts.append(f"knot({t.feature},{t.knot!r})")
    return ", ".join(parts)


def _indicator(X, feature, c, two_sided):
    x = X[:, feature]
    return (np.abs(x) if two_sided else x) > c


def grid_search_threshold(d, X, feature: int, candidates: Sequence[float], two_sided: bool = True,
                          min_side: int = 10) -> float:
    """Pick the threshold whose two-group (median) fit minimises the median
    absolute residual of the pseudo-outcomes.

    Ties on the median, common when more than half the residuals are exactly
    zero, are broken by the mean absolute residual.
    """
    dv = np.asarray(getattr(d, "d", d), dtype=float)
    X = np.asarray(X, dtype=float)
    cands = list(candidates)
    if not cands:
        raise ValueError("need at least one candidate threshold")
    if len(cands) == 1:
        return float(cands[0])
    best, best_score = None, (np.inf, np.inf)
    for c in cands:
        g = _indicator(X, feature, c, two_sided)
        if g.sum() < min_side or (~g).sum() < min_side:
            continue
        fit = np.where(g, np.median(dv[g]), np.median(dv[~g]))
        res = np.abs(dv - fit)
        score = (float(np.median(res)), float(np.mean(res)))
        if score < best_score:
            best, best_score = float(c), score
    if best is None:
        raise ValueError("every candidate threshold splits the data degenerately")
    return best


@dataclass
class BmaResult:
    candidates: list
    weights: np.ndarray
    mean_losses: np.ndarray
    fits: list = field(repr=False)
    tau_draws: np.ndarray = field(repr=False, default=None)

    def tau_mean(self) -> np.ndarray:
        return self.tau_draws.mean(axis=0)

    def tau_ci(self, level: float = 0.95):
        a = (1.0 - level) / 2.0
        return np.quantile(self.tau_draws, a, axis=0), np.quantile(self.tau_draws, 1 - a, axis=0)


def bma_over_thresholds(d, X, feature: int, candidates: Sequence[float] = DEFAULT_THRESHOLDS,
                        welsch_c: float = 1.34, X_eval=None, two_sided: bool = True,
                        sampler=None, seed: int = 0, n_pooled: int = 4000) -> BmaResult:
    """Welsch posterior per candidate threshold, softmax weights over negative
    mean in-sample Welsch loss at the posterior mean, and pooled tau(x) draws
    by weighted resampling."""
    from .losses import Welsch
    from .posterior import LikelihoodSpec, PriorSpec, SamplerConfig, fit_posterior

    sampler = sampler or SamplerConfig()
    X = np.asarray(X, dtype=float)
    X_eval = X if X_eval is None else np.asarray(X_eval, dtype=float)
    rng = np.random.default_rng(seed)
    loss = Welsch(welsch_c)
    fits, losses, tau_sets = [], [], []
    for j, c in enumerate(candidates):
        spec = BasisSpec.tail(c, feature, two_sided)
        Phi = evaluate_basis(spec, X).phi
        fit = fit_posterior(Phi, d, LikelihoodSpec.welsch(welsch_c), PriorSpec(), sampler, seed=seed + 1000 * j)
        beta_bar = fit.draws.flat().mean(axis=0)
        dv = np.asarray(getattr(d, "d", d), dtype=float)
        losses.append(float(np.mean(loss.rho(dv - Phi @ beta_bar))))
        tau_sets.append(fit.draws.flat() @ evaluate_basis(spec, X_eval).phi.T)
        fits.append(fit)
    losses = np.array(losses)
    z = -(losses - losses.min())
    weights = np.exp(z) / np.exp(z).sum()
    pick = rng.choice(len(candidates), size=n_pooled, p=weights)
    rows = np.empty((n_pooled, X_eval.shape[0]))
    for j in range(len(candidates)):
        sel = np.flatnonzero(pick == j)
        if sel.size:
            rows[sel] = tau_sets[j][rng.integers(0, tau_sets[j].shape[0], size=sel.size)]
    return BmaResult(list(candidates), weights, losses, fits, rows)
