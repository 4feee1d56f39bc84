"""Minimal histogram gradient-boosted trees.

Regression boosting uses the loss's psi as the pseudo-residual with unit
curvature (leaf value = weighted mean psi). Logistic boosting uses Newton
leaves. Trees are grown level-wise on quantile-binned features.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .losses import LossKind, SquaredError

MAX_BINS = 64


@dataclass(frozen=True)
class GbtParams:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    loss: LossKind = field(default_factory=SquaredError)
    seed: int = 0
    subsample: float = 1.0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not (0.0 < self.subsample <= 1.0):
            raise ValueError("subsample must lie in (0, 1]")


def _bin_edges(X: np.ndarray, max_bins: int = MAX_BINS) -> list[np.ndarray]:
    edges = []
    qs = np.linspace(0.0, 1.0, max_bins + 1)[1:-1]
    for j in range(X.shape[1]):
        e = np.unique(np.quantile(X[:, j], qs))
        edges.append(e)
    return edges


def _apply_bins(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        # bin b holds x with e[b-1] < x <= e[b]
        out[:, j] = np.searchsorted(e, X[:, j], side="left")
    return out


@dataclass
class _Tree:
    # node arrays; leaves have feature == -1
    feature: np.ndarray
    split_bin: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_binned(self, B: np.ndarray) -> np.ndarray:
        node = np.zeros(B.shape[0], dtype=np.int64)
        rows = np.arange(B.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = B[rows[internal], f[internal]] <= self.split_bin[node[internal]]
            node[internal] = np.where(go_left, self.left[node[internal]], self.right[node[internal]])
        return self.value[node]


def _grow_tree(B, grad, hess, n_bins, max_depth, min_leaf, min_gain=1e-12):
    """Grow one tree on binned features. Leaf value = G / H (Newton step)."""
    n, d = B.shape
    nb = int(n_bins.max())
    feature, split_bin, left, right, value = [-1], [0], [-1], [-1], [0.0]
    node_of = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    frontier = [0]
    col_offsets = np.arange(d) * nb
    for depth in range(max_depth + 1):
        if not frontier:
            break
        idx = np.flatnonzero(active)
        lut = np.full(len(feature), -1, dtype=np.int64)
        lut[frontier] = np.arange(len(frontier))
        ln = lut[node_of[idx]]
        m = len(frontier)
        G_tot = np.bincount(ln, weights=grad[idx], minlength=m)
        H_tot = np.bincount(ln, weights=hess[idx], minlength=m)
        C_tot = np.bincount(ln, minlength=m)
        for k, nid in enumerate(frontier):
            value[nid] = G_tot[k] / H_tot[k] if H_tot[k] > 0 else 0.0
        if depth == max_depth:
            break
        flat = (ln[:, None] * (d * nb) + col_offsets[None, :] + B[idx]).ravel()
        size = m * d * nb
        Gh = np.bincount(flat, weights=np.repeat(grad[idx], d), minlength=size).reshape(m, d, nb)
        Hh = np.bincount(flat, weights=np.repeat(hess[idx], d), minlength=size).reshape(m, d, nb)
        Ch = np.bincount(flat, minlength=size).reshape(m, d, nb)
        GL, HL, CL = Gh.cumsum(2), Hh.cumsum(2), Ch.cumsum(2)
        GR = G_tot[:, None, None] - GL
        HR = H_tot[:, None, None] - HL
        CR = C_tot[:, None, None] - CL
        ok = (CL >= min_leaf) & (CR >= min_leaf) & (HL > 0) & (HR > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            parent = np.where(H_tot > 0, G_tot**2 / H_tot, 0.0)
            gain = GL**2 / HL + GR**2 / HR - parent[:, None, None]
        gain = np.where(ok, gain, -np.inf)
        new_frontier = []
        flat_gain = gain.reshape(m, -1)
        best = flat_gain.argmax(axis=1)
        split_of = {}
        for k, nid in enumerate(frontier):
            g = flat_gain[k, best[k]]
            if not np.isfinite(g) or g <= min_gain:
                continue
            f, b = divmod(int(best[k]), nb)
            feature[nid] = f
            split_bin[nid] = b
            li, ri = len(feature), len(feature) + 1
            for _ in range(2):
                feature.append(-1)
                split_bin.append(0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            left[nid], right[nid] = li, ri
            split_of[nid] = (f, b, li, ri)
            new_frontier += [li, ri]
        # route samples
        nodes = node_of[idx]
        moved = np.zeros(idx.size, dtype=bool)
        for nid, (f, b, li, ri) in split_of.items():
            sel = nodes == nid
            go_left = B[idx[sel], f] <= b
            node_of[idx[sel]] = np.where(go_left, li, ri)
            moved |= sel
        active[idx[~moved]] = False
        frontier = new_frontier
    return _Tree(
        np.array(feature, dtype=np.int64),
        np.array(split_bin, dtype=np.int64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )


def _weighted_median(y, w):
    order = np.argsort(y, kind="mergesort")
    cw = np.cumsum(w[order])
    return float(y[order][np.searchsorted(cw, 0.5 * cw[-1])])


def _check_xy(X, y, sample_weights):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if not np.all(np.isfinite(X)):
        raise ValueError("covariates must be finite")
    if sample_weights is None:
        w = np.ones(y.shape[0])
    else:
        w = np.asarray(sample_weights, dtype=float).ravel()
        if w.shape != y.shape or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("sample_weights must be finite, non-negative and match y")
    return X, y, w


class _Booster:
    def __init__(self, params, edges, init, trees):
        self.params = params
        self.edges = edges
        self.init = init
        self.trees = trees

    def raw_predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.edges):
            raise ValueError("X has the wrong number of columns")
        B = _apply_bins(X, self.edges)
        out = np.full(X.shape[0], self.init)
        lr = self.params.learning_rate
        for t in self.trees:
            out += lr * t.predict_binned(B)
        return out


class GbtModel(_Booster):
    """Fitted additive tree ensemble for regression."""

    def predict(self, X) -> np.ndarray:
        return self.raw_predict(X)


class PropensityModel(_Booster):
    """Boosted logistic model with clipped probability output."""

    def __init__(self, params, edges, init, trees, clip=(0.01, 0.99)):
        super().__init__(params, edges, init, trees)
        self.clip = clip

    def predict_proba(self, X) -> np.ndarray:
        return np.clip(expit(self.raw_predict(X)), *self.clip)


def _boost(X, y, w, params, gradient, hessian, init):
    edges = _bin_edges(X)
    B = _apply_bins(X, edges)
    n_bins = np.array([len(e) + 1 for e in edges])
    rng = np.random.default_rng(params.seed)
    F = np.full(y.shape[0], init)
    trees = []
    for _ in range(params.n_trees):
        g = gradient(y, F) * w
        h = hessian(y, F) * w
        if params.subsample < 1.0:
            keep = rng.random(y.shape[0]) < params.subsample
            g, h = np.where(keep, g, 0.0), np.where(keep, h, 0.0)
        tree = _grow_tree(B, g, h, n_bins, params.max_depth, params.min_samples_leaf)
        F += params.learning_rate * tree.predict_binned(B)
        trees.append(tree)
    return edges, trees


def fit_gbt(X, y, params: GbtParams = GbtParams(), sample_weights=None) -> GbtModel:
    """Fit a boosted regression ensemble whose per-round pseudo-residual is
    ``psi_loss(y - F)``."""
    X, y, w = _check_xy(X, y, sample_weights)
    loss = params.loss
    if isinstance(loss, SquaredError):
        init = float(np.average(y, weights=w)) if w.sum() > 0 else 0.0
    else:
        init = _weighted_median(y, w)
    edges, trees = _boost(
        X, y, w, params,
        gradient=lambda yy, F: loss.psi(yy - F),
        hessian=lambda yy, F: np.ones_like(F),
        init=init,
    )
    return GbtModel(params, edges, init, trees)


def fit_propensity(X, w_treat, params: GbtParams | None = None, sample_weights=None,
                   clip=(0.01, 0.99)) -> PropensityModel:
    """Boosted logistic regression of a binary treatment on covariates."""
    params = params or default_propensity_params()
    X, t, sw = _check_xy(X, w_treat, sample_weights)
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("treatment must be binary")
    if t.min() == t.max():
        raise ValueError("propensity model needs both treated and control units")
    if not (0.0 < clip[0] < clip[1] < 1.0):
        raise ValueError("clip bounds must satisfy 0 < lo < hi < 1")
    p0 = float(np.average(t, weights=sw))
    init = float(np.log(p0 / (1.0 - p0)))
    edges, trees = _boost(
        X, t, sw, params,
        gradient=lambda yy, F: yy - expit(F),
        hessian=lambda yy, F: np.maximum(expit(F) * (1.0 - expit(F)), 1e-6),
        init=init,
    )
    return PropensityModel(params, edges, init, trees, clip=clip)


def default_propensity_params(seed: int = 0) -> GbtParams:
    return GbtParams(n_trees=100, max_depth=2, learning_rate=0.05, min_samples_leaf=40, seed=seed)
