"""No-U-Turn sampler with multinomial trajectory sampling.

Warmup adapts the step size by dual averaging towards ``target_accept`` and
estimates a diagonal inverse metric in two windows; the second window covers
the second half of warmup (minus a terminal step-size buffer) and sets the
metric used for sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

Target = Callable[[np.ndarray], tuple]
MAX_DELTA_H = 1000.0


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 2
    warmup: int = 400
    samples: int = 800
    target_accept: float = 0.8
    max_tree_depth: int = 10
    jitter: float = 0.1


@dataclass
class PosteriorDraws:
    draws: np.ndarray  # chains x samples x dim
    warmup: int
    energy: np.ndarray  # chains x samples
    divergent: np.ndarray
    step_size: np.ndarray  # per chain
    mass_diag: np.ndarray  # chains x dim, inverse metric
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray

    @property
    def divergence_count(self) -> int:
        return int(self.divergent.sum())

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_samples(self) -> int:
        return self.draws.shape[1]

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])

    def subset(self, cols) -> "PosteriorDraws":
        return PosteriorDraws(self.draws[..., cols], self.warmup, self.energy, self.divergent,
                              self.step_size, self.mass_diag[..., cols], self.accept_stat,
                              self.tree_depth, self.n_leapfrog)


class _State(NamedTuple):
    q: np.ndarray
    p: np.ndarray
    lp: float
    grad: np.ndarray


class _Tree(NamedTuple):
    left: _State
    right: _State
    sample: _State
    log_w: float
    rho: np.ndarray
    turning: bool
    diverging: bool
    sum_accept: float
    n_steps: int


class _DualAveraging:
    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_eps_bar = 0.0

    def update(self, accept):
        self.t += 1
        a = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - a) * self.h_bar + a * (self.target - accept)
        log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        x = self.t ** (-self.kappa)
        self.log_eps_bar = x * log_eps + (1.0 - x) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def _logaddexp(a: float, b: float) -> float:
    hi, lo = (a, b) if a >= b else (b, a)
    if lo == -math.inf:
        return hi
    return hi + math.log1p(math.exp(lo - hi))


class _Kernel:
    def __init__(self, target, inv_mass, max_depth):
        self.target = target
        self.inv_mass = inv_mass
        self.sqrt_mass = 1.0 / np.sqrt(inv_mass)
        self.max_depth = max_depth

    def kinetic(self, p):
        return 0.5 * float(np.dot(self.inv_mass * p, p))

    def _eval(self, q):
        try:
            lp, g = self.target(q)
        except (ValueError, FloatingPointError, OverflowError):
            return -math.inf, np.zeros_like(q)
        if not math.isfinite(lp) or not np.isfinite(g).all():
            return -math.inf, np.zeros_like(q)
        return float(lp), g

    def leapfrog(self, s: _State, eps):
        p = s.p + 0.5 * eps * s.grad
        q = s.q + eps * self.inv_mass * p
        lp, g = self._eval(q)
        if math.isfinite(lp):
            p = p + 0.5 * eps * g
        return _State(q, p, lp, g)

    def no_uturn(self, a: _State, b: _State, rho):
        return (float(np.dot(self.inv_mass * a.p, rho)) > 0.0
                and float(np.dot(self.inv_mass * b.p, rho)) > 0.0)

    def build(self, s: _State, depth, direction, eps, H0, rng) -> _Tree:
        if depth == 0:
            new = self.leapfrog(s, direction * eps)
            H = -new.lp + self.kinetic(new.p) if math.isfinite(new.lp) else math.inf
            dH = H - H0
            if not math.isfinite(dH):
                dH = math.inf
            diverging = dH > MAX_DELTA_H
            accept = math.exp(-dH) if dH > 0 else 1.0
            return _Tree(new, new, new, -dH, new.p, False, diverging, accept, 1)
        first = self.build(s, depth - 1, direction, eps, H0, rng)
        if first.turning or first.diverging:
            return first
        edge = first.right if direction > 0 else first.left
        second = self.build(edge, depth - 1, direction, eps, H0, rng)
        if second.turning or second.diverging:
            return second._replace(sum_accept=first.sum_accept + second.sum_accept,
                                   n_steps=first.n_steps + second.n_steps)
        L, R = (first, second) if direction > 0 else (second, first)
        # uniform progressive sampling inside a subtree
        log_w = _logaddexp(first.log_w, second.log_w)
        sample = second.sample if math.log(rng.random()) < second.log_w - log_w else first.sample
        rho = L.rho + R.rho
        ok = (self.no_uturn(L.left, R.right, rho)
              and self.no_uturn(L.left, R.left, L.rho + R.left.p)
              and self.no_uturn(L.right, R.right, R.rho + L.right.p))
        return _Tree(L.left, R.right, sample, log_w, rho, not ok, False,
                     first.sum_accept + second.sum_accept, first.n_steps + second.n_steps)

    def transition(self, q, lp, grad, eps, rng):
        p0 = rng.standard_normal(q.shape[0]) * self.sqrt_mass
        H0 = -lp + self.kinetic(p0)
        s0 = _State(q, p0, lp, grad)
        tree = _Tree(s0, s0, s0, 0.0, p0.copy(), False, False, 0.0, 0)
        sum_accept, n_steps, diverging, depth = 0.0, 0, False, 0
        while depth < self.max_depth:
            direction = 1 if rng.random() < 0.5 else -1
            edge = tree.right if direction > 0 else tree.left
            sub = self.build(edge, depth, direction, eps, H0, rng)
            sum_accept += sub.sum_accept
            n_steps += sub.n_steps
            depth += 1
            if sub.diverging:
                diverging = True
                break
            if sub.turning:
                break
            # biased progressive sampling at the top level
            sample = sub.sample if math.log(rng.random()) < sub.log_w - tree.log_w else tree.sample
            L, R = (tree, sub) if direction > 0 else (sub, tree)
            rho = L.rho + R.rho
            ok = (self.no_uturn(L.left, R.right, rho)
                  and self.no_uturn(L.left, R.left, L.rho + R.left.p)
                  and self.no_uturn(L.right, R.right, R.rho + L.right.p))
            tree = _Tree(L.left, R.right, sample, _logaddexp(tree.log_w, sub.log_w), rho,
                         not ok, False, 0.0, 0)
            if not ok:
                break
        s = tree.sample
        energy = -s.lp + self.kinetic(s.p)
        return s.q, s.lp, s.grad, sum_accept / max(n_steps, 1), diverging, depth, n_steps, energy


def _reasonable_eps(kernel: _Kernel, q, lp, grad, rng):
    eps = 1.0
    p = rng.standard_normal(q.shape[0]) * kernel.sqrt_mass
    H0 = -lp + kernel.kinetic(p)

    def log_ratio(e):
        s = kernel.leapfrog(_State(q, p, lp, grad), e)
        if not math.isfinite(s.lp):
            return -math.inf
        return H0 - (-s.lp + kernel.kinetic(s.p))

    lr = log_ratio(eps)
    direction = 1 if lr > math.log(0.8) else -1
    for _ in range(100):
        if direction == 1 and not lr > math.log(0.8):
            break
        if direction == -1 and not lr < math.log(0.8):
            break
        eps = eps * (2.0 if direction == 1 else 0.5)
        if eps > 1e7 or eps < 1e-10:
            break
        lr = log_ratio(eps)
    return eps


def _diag_curvature(target, q, grad):
    """Finite-difference diagonal of -Hessian, used for an initial metric."""
    h = 1e-4 * np.maximum(1.0, np.abs(q))
    out = np.ones_like(q)
    for i in range(q.shape[0]):
        e = np.zeros_like(q)
        e[i] = h[i]
        try:
            _, gp = target(q + e)
            _, gm = target(q - e)
        except ValueError:
            continue
        c = -(gp[i] - gm[i]) / (2 * h[i])
        if np.isfinite(c) and c > 0:
            out[i] = c
    return out


def _run_chain(target, q0, cfg: SamplerConfig, rng):
    dim = q0.shape[0]
    lp, grad = target(q0)
    if not math.isfinite(lp):
        raise ValueError("target is not finite at the initial point")
    inv_mass = 1.0 / _diag_curvature(target, q0, grad)
    kernel = _Kernel(target, inv_mass, cfg.max_tree_depth)
    q = q0
    eps = _reasonable_eps(kernel, q, lp, grad, rng)
    da = _DualAveraging(eps, cfg.target_accept)
    W = cfg.warmup
    windows = []
    if W >= 20:
        start, half, end = int(0.15 * W), W // 2, W - max(int(0.1 * W), 1)
        windows = [(start, half), (half, end)]
    buf = []
    for it in range(W):
        q, lp, grad, acc, _, _, _, _ = kernel.transition(q, lp, grad, eps, rng)
        eps = da.update(acc)
        for a, b in windows:
            if a <= it < b:
                buf.append(q)
            if it == b - 1 and len(buf) > 2:
                x = np.asarray(buf)
                n = x.shape[0]
                var = x.var(axis=0, ddof=1)
                kernel = _Kernel(target, (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0)), cfg.max_tree_depth)
                buf = []
                eps = _reasonable_eps(kernel, q, lp, grad, rng)
                da = _DualAveraging(eps, cfg.target_accept)
    if W > 0:
        eps = da.final
    S = cfg.samples
    draws = np.empty((S, dim))
    energy = np.empty(S)
    divergent = np.zeros(S, dtype=bool)
    accept = np.empty(S)
    depth = np.empty(S, dtype=np.int64)
    n_leap = np.empty(S, dtype=np.int64)
    for i in range(S):
        q, lp, grad, acc, div, dep, nl, en = kernel.transition(q, lp, grad, eps, rng)
        draws[i], energy[i], divergent[i], accept[i], depth[i], n_leap[i] = q, en, div, acc, dep, nl
    return draws, energy, divergent, accept, depth, n_leap, eps, kernel.inv_mass


def nuts_sample(target: Target, dim: int, config: SamplerConfig = SamplerConfig(), seed: int = 0,
                init=None) -> PosteriorDraws:
    """Draw ``config.chains`` independent NUTS chains from ``target``.

    ``target(theta)`` returns ``(log_density, gradient)``. Chain ``k`` uses the
    k-th child of ``SeedSequence(seed)``, so adding chains never changes the
    draws of existing ones.
    """
    q_init = np.zeros(dim) if init is None else np.asarray(init, dtype=float)
    if q_init.shape != (dim,):
        raise ValueError("init has the wrong shape")
    seqs = np.random.SeedSequence(seed).spawn(config.chains)
    out = []
    for ss in seqs:
        rng = np.random.default_rng(ss)
        q0 = q_init + config.jitter * rng.uniform(-1.0, 1.0, size=dim)
        if not math.isfinite(target(q0)[0]):
            q0 = q_init
        out.append(_run_chain(target, q0, config, rng))
    return PosteriorDraws(
        draws=np.stack([o[0] for o in out]),
        warmup=config.warmup,
        energy=np.stack([o[1] for o in out]),
        divergent=np.stack([o[2] for o in out]),
        step_size=np.array([o[6] for o in out]),
        mass_diag=np.stack([o[7] for o in out]),
        accept_stat=np.stack([o[3] for o in out]),
        tree_depth=np.stack([o[4] for o in out]),
        n_leapfrog=np.stack([o[5] for o in out]),
    )
