"""Robust rho/psi/psi' functions, Huber's minimax tuning constant and robust scale.

All loss objects are vectorised: ``rho``, ``psi`` and ``psi_prime`` accept
scalars or numpy arrays and broadcast elementwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy import integrate, optimize, stats

ArrayLike = Union[float, np.ndarray]

MAD_CONSISTENCY = 0.6745
TUKEY_C = 4.685
WELSCH_C = 1.34


def _check_constant(name: str, value: float) -> None:
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class SquaredError:
    def rho(self, r: ArrayLike) -> ArrayLike:
        return 0.5 * np.square(r)

    def psi(self, r: ArrayLike) -> ArrayLike:
        return np.asarray(r, dtype=float) * 1.0

    def psi_prime(self, r: ArrayLike) -> ArrayLike:
        return np.ones_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class Huber:
    delta: float = 1.345

    def __post_init__(self):
        _check_constant("delta", self.delta)

    def rho(self, r: ArrayLike) -> ArrayLike:
        a = np.abs(r)
        d = self.delta
        return np.where(a <= d, 0.5 * a * a, d * a - 0.5 * d * d)

    def psi(self, r: ArrayLike) -> ArrayLike:
        return np.clip(r, -self.delta, self.delta)

    def psi_prime(self, r: ArrayLike) -> ArrayLike:
        return (np.abs(r) <= self.delta).astype(float)


@dataclass(frozen=True)
class Welsch:
    """Welsch loss with the ``exp(-r^2/c^2)`` convention."""

    c: float = WELSCH_C

    def __post_init__(self):
        _check_constant("c", self.c)

    def rho(self, r: ArrayLike) -> ArrayLike:
        c2 = self.c * self.c
        return 0.5 * c2 * -np.expm1(-np.square(r) / c2)

    def psi(self, r: ArrayLike) -> ArrayLike:
        return r * np.exp(-np.square(r) / (self.c * self.c))

    def rho_psi(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """rho and psi from one expm1 call; the sampler's hot path."""
        c2 = self.c * self.c
        em1 = np.expm1(-(r * r) / c2)
        return -0.5 * c2 * em1, r * (1.0 + em1)

    def psi_prime(self, r: ArrayLike) -> ArrayLike:
        u = np.square(r) / (self.c * self.c)
        return np.exp(-u) * (1.0 - 2.0 * u)

    @property
    def psi_max(self) -> float:
        # attained at r = c / sqrt(2)
        return self.c * math.exp(-0.5) / math.sqrt(2.0)


@dataclass(frozen=True)
class Tukey:
    """Tukey biweight; rho is constant at c^2/6 for |r| >= c."""

    c: float = TUKEY_C

    def __post_init__(self):
        _check_constant("c", self.c)

    def rho(self, r: ArrayLike) -> ArrayLike:
        u2 = np.minimum(np.square(r) / (self.c * self.c), 1.0)
        return (self.c * self.c / 6.0) * (1.0 - (1.0 - u2) ** 3)

    def psi(self, r: ArrayLike) -> ArrayLike:
        u2 = np.square(r) / (self.c * self.c)
        return np.where(u2 < 1.0, r * (1.0 - u2) ** 2, 0.0)

    def psi_prime(self, r: ArrayLike) -> ArrayLike:
        u2 = np.square(r) / (self.c * self.c)
        return np.where(u2 < 1.0, (1.0 - u2) * (1.0 - 5.0 * u2), 0.0)


LossKind = Union[SquaredError, Huber, Welsch, Tukey]


class LossEval(NamedTuple):
    rho: float
    psi: float
    psi_prime: float


def evaluate_loss(kind: LossKind, r: float) -> LossEval:
    """Evaluate rho, psi and psi' of ``kind`` at a single residual."""
    r = float(r)
    if not math.isfinite(r):
        raise ValueError(f"residual must be finite, got {r!r}")
    return LossEval(float(kind.rho(r)), float(kind.psi(r)), float(kind.psi_prime(r)))


def _minimax_equation(delta: float, epsilon: float) -> float:
    return stats.norm.pdf(delta) / delta - stats.norm.sf(delta) - epsilon / (2.0 * (1.0 - epsilon))


def minimax_delta(epsilon: float) -> float:
    """Huber's minimax-optimal delta for the symmetric epsilon-contamination
    neighbourhood of N(0, 1).

    Solves ``phi(d)/d - (1 - Phi(d)) = eps / (2 (1 - eps))`` with Brent's method
    on ``[1e-6, 10]``.
    """
    if not (0.0 < epsilon < 0.5):
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon!r}")
    return optimize.brentq(_minimax_equation, 1e-6, 10.0, args=(epsilon,), xtol=1e-14, rtol=1e-15)


def huber_are(delta: float) -> float:
    """Asymptotic relative efficiency (E[psi'])^2 / Var[psi] of the Huber
    location estimator at the standard normal."""
    if not (np.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be positive, got {delta!r}")
    d = min(delta, 12.0)
    # E[psi'] = P(|Z| <= d); Var[psi] = E[min(|Z|, d)^2] since psi is odd
    e_dpsi = integrate.quad(stats.norm.pdf, -d, d, epsabs=1e-12)[0]
    inner = integrate.quad(lambda r: r * r * stats.norm.pdf(r), -d, d, epsabs=1e-12)[0]
    tails = 2.0 * integrate.quad(lambda r: d * d * stats.norm.pdf(r), d, 12.0, epsabs=1e-12)[0]
    return e_dpsi**2 / (inner + tails)


def mad(values, consistency_scaled: bool = True) -> float:
    """Median absolute deviation from the median.

    With ``consistency_scaled`` the result is divided by 0.6745 so that it
    estimates the standard deviation at the normal model.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("mad needs at least two values")
    if not np.all(np.isfinite(x)):
        raise ValueError("mad needs finite values")
    m = float(np.median(np.abs(x - np.median(x))))
    if m <= 0.0:
        raise ValueError("zero scale: median absolute deviation is 0")
    return m / MAD_CONSISTENCY if consistency_scaled else m


def loss_from_name(name: str, value: float | None = None) -> LossKind:
    name = name.lower()
    if name in ("squared", "squared_error", "mse", "l2"):
        return SquaredError()
    if name == "huber":
        return Huber(1.345 if value is None else value)
    if name == "welsch":
        return Welsch(WELSCH_C if value is None else value)
    if name == "tukey":
        return Tukey(TUKEY_C if value is None else value)
    raise ValueError(f"unknown loss {name!r}")
