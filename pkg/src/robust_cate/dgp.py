"""Synthetic data-generating processes for contamination stress tests."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .nuisance import CausalDataset

SUBGROUP_THRESHOLD = 1.96


class DgpKind(str, enum.Enum):
    WHALE = "whale"
    TAIL_HETERO = "tail_hetero"
    PARETO = "pareto"
    T_NOISE = "t_noise"
    BIMODAL = "bimodal"
    LOW_OVERLAP = "low_overlap"
    DOLLAR_SCALE = "dollar_scale"
    CLEAN_LINEAR = "clean_linear"
    STABLE = "stable"


# kind-specific parameters and their defaults
DEFAULT_PARAMS = {
    DgpKind.WHALE: {"shift": 5000.0, "logit_coef": 0.3, "arm": "both"},
    DgpKind.TAIL_HETERO: {"shift": 5000.0, "logit_coef": 0.3, "tail_tau": 10.0, "threshold": SUBGROUP_THRESHOLD},
    DgpKind.PARETO: {"alpha": 1.5, "scale": 1.0, "logit_coef": 0.3},
    DgpKind.T_NOISE: {"nu": 3.0, "logit_coef": 0.3},
    DgpKind.BIMODAL: {"shift": 5000.0, "logit_coef": 0.3},
    DgpKind.LOW_OVERLAP: {"shift": 5000.0, "logit_coef": 3.0},
    DgpKind.DOLLAR_SCALE: {"shift": 25000.0, "tau": 1000.0, "scale": 5000.0, "logit_coef": 0.3},
    DgpKind.CLEAN_LINEAR: {"tau_slope": 1.0, "logit_coef": 0.3},
    DgpKind.STABLE: {"alpha": 1.7, "logit_coef": 0.3},
}


@dataclass(frozen=True)
class DgpSpec:
    kind: DgpKind | str = DgpKind.WHALE
    n: int = 1000
    dim: int = 5
    density: float = 0.0
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DgpKind(self.kind))
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must lie in [0, 1]")
        if self.n < 50:
            raise ValueError("n must be at least 50")
        if self.dim < 2:
            raise ValueError("dim must be at least 2 (baseline uses x0 and x1)")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind.value}: {sorted(unknown)}")

    def param(self, key):
        return self.params.get(key, DEFAULT_PARAMS[self.kind][key])


@dataclass
class GeneratedData:
    dataset: CausalDataset
    tau_true: np.ndarray
    contaminated_mask: np.ndarray
    subgroup_mask: np.ndarray
    pi_true: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    spec: DgpSpec

    def to_csv(self, path) -> None:
        write_csv(self, path)


def stable_noise(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Symmetric alpha-stable draws (Chambers-Mallows-Stuck); alpha=2 gives N(0, 2)."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    v = rng.uniform(-np.pi / 2, np.pi / 2, size)
    e = rng.exponential(1.0, size)
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos(v - alpha * v) / e) ** ((1.0 - alpha) / alpha))


def generate(spec: DgpSpec) -> GeneratedData:
    rng = np.random.default_rng(spec.seed)
    kind, n = spec.kind, spec.n
    X = rng.standard_normal((n, spec.dim))
    pi = expit(spec.param("logit_coef") * X[:, 0])
    w = (rng.random(n) < pi).astype(float)
    baseline = 1.0 + 0.5 * X[:, 0] + 0.5 * X[:, 1]

    if kind is DgpKind.T_NOISE:
        noise = rng.standard_t(spec.param("nu"), n)
    elif kind is DgpKind.STABLE:
        noise = stable_noise(spec.param("alpha"), n, rng)
    else:
        noise = rng.standard_normal(n)

    tau = np.full(n, 2.0)
    subgroup = np.abs(X[:, 0]) > SUBGROUP_THRESHOLD
    if kind is DgpKind.TAIL_HETERO:
        subgroup = np.abs(X[:, 0]) > spec.param("threshold")
        tau = np.where(subgroup, spec.param("tail_tau"), 2.0)
    elif kind is DgpKind.CLEAN_LINEAR:
        tau = 2.0 + spec.param("tau_slope") * X[:, 0]
    elif kind is DgpKind.DOLLAR_SCALE:
        tau = np.full(n, spec.param("tau"))
        baseline = spec.param("scale") * baseline
        noise = spec.param("scale") * noise

    y0 = baseline + noise
    y1 = y0 + tau
    y = np.where(w == 1, y1, y0)

    contaminated = rng.random(n) < spec.density
    if kind is DgpKind.WHALE:
        arm = spec.param("arm")
        if arm not in ("both", "treated", "control"):
            raise ValueError("arm must be 'both', 'treated' or 'control'")
        if arm != "both":
            contaminated &= w == (1.0 if arm == "treated" else 0.0)
    if kind is DgpKind.CLEAN_LINEAR:
        contaminated[:] = False
    if kind is DgpKind.PARETO:
        shift = spec.param("scale") * (rng.pareto(spec.param("alpha"), n) + 1.0)
    elif kind is DgpKind.BIMODAL:
        shift = spec.param("shift") * rng.choice([-1.0, 1.0], n)
    elif kind in (DgpKind.T_NOISE, DgpKind.STABLE, DgpKind.CLEAN_LINEAR):
        shift = np.zeros(n)
    else:
        shift = np.full(n, float(spec.param("shift")))
    y = y + np.where(contaminated, shift, 0.0)

    dataset = CausalDataset(X, w, y, tau)
    return GeneratedData(dataset, tau, contaminated, subgroup, pi, y0, y1, spec)


def write_csv(data: GeneratedData, path) -> None:
    ds = data.dataset
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["y", "w"] + [f"x{j}" for j in range(ds.dim)] + ["tau_true", "contaminated"])
        for i in range(ds.n):
            out.writerow([repr(float(ds.y[i])), int(ds.w[i])] + [repr(float(v)) for v in ds.X[i]]
                         + [repr(float(data.tau_true[i])), int(data.contaminated_mask[i])])
