"""Benchmark sweeps over synthetic DGPs, with per-row and aggregate CSVs."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dgp import DgpSpec, generate
from .losses import Welsch
from .metrics import ate_error, pehe, policy_regret, wilson_interval
from .modular import dispersion_ratio
from .pipeline import fit, predict_cate
from .stages import FitConfig, derive_seed
from .tails import auto_severity

ROW_FIELDS = [
    "benchmark", "cell", "density", "config", "seed_index", "seed", "ate_mean", "ate_lo", "ate_hi", "ate_true",
    "ate_error", "ate_sq_error", "covered", "width", "pehe", "regret", "fraction_treated", "subgroup_mean",
    "subgroup_lo", "subgroup_hi", "subgroup_true", "subgroup_covered", "eta", "rhat_max", "ess_min",
    "bfmi_min", "divergences", "dispersion", "alpha_hat", "auto_severity", "error",
]
AGG_FIELDS = [
    "benchmark", "density", "config", "n_ok", "n_error", "ate_mean", "bias", "rmse", "mean_ate_error", "pehe",
    "coverage", "coverage_lo", "coverage_hi", "width", "regret", "fraction_treated", "subgroup_mean",
    "subgroup_coverage", "dispersion", "alpha_hat",
]
EXTRA_METRICS = ("dispersion", "auto_severity")


@dataclass
class BenchmarkSpec:
    name: str
    dgp: DgpSpec
    densities: tuple
    seeds: int = 3
    configs: list = field(default_factory=lambda: [("default", FitConfig())])
    extra_metrics: tuple = ()
    dispersion_repeats: int = 5

    def __post_init__(self):
        if not self.densities:
            raise ValueError("density grid is empty")
        if self.seeds < 1:
            raise ValueError("need at least one seed")
        bad = set(self.extra_metrics) - set(EXTRA_METRICS)
        if bad:
            raise ValueError(f"unknown metrics {sorted(bad)}")
        for d in self.densities:
            if not (np.isfinite(d) and 0.0 <= d <= 1.0):
                raise ValueError(f"density {d} outside [0, 1]")

    def tasks(self, master_seed: int):
        for cell, density in enumerate(self.densities):
            for s in range(self.seeds):
                yield (self, master_seed, cell, float(density), s)


def _blank_row(spec, cell, density, cname, s, seed):
    row = {k: "" for k in ROW_FIELDS}
    row.update(benchmark=spec.name, cell=cell, density=density, config=cname, seed_index=s, seed=seed)
    return row


def evaluate_fit(result, data) -> dict:
    ds = data.dataset
    ate = result.ate()
    truth = float(np.mean(data.tau_true))
    pred = predict_cate(result, ds.X)
    out = {
        "ate_mean": ate["mean"], "ate_lo": ate["ci"][0], "ate_hi": ate["ci"][1], "ate_true": truth,
        "ate_error": ate_error([ate["mean"]], [truth]), "ate_sq_error": (ate["mean"] - truth) ** 2,
        "covered": int(ate["ci"][0] <= truth <= ate["ci"][1]), "width": ate["ci"][1] - ate["ci"][0],
        "pehe": pehe(pred.tau_mean, data.tau_true), "regret": policy_regret(pred.tau_mean, data.tau_true),
        "fraction_treated": float(np.mean(pred.tau_mean > 0)), "eta": result.eta,
    }
    if np.any(data.subgroup_mask):
        sub = result.contrast(result.Phi[data.subgroup_mask].mean(axis=0))
        st = float(np.mean(data.tau_true[data.subgroup_mask]))
        out.update(subgroup_mean=sub["mean"], subgroup_lo=sub["ci"][0], subgroup_hi=sub["ci"][1],
                   subgroup_true=st, subgroup_covered=int(sub["ci"][0] <= st <= sub["ci"][1]))
    diags = result.diagnostics if isinstance(result.diagnostics, list) else [result.diagnostics]
    diags = [d for d in diags if d is not None]
    if diags:
        out.update(rhat_max=max(float(d.r_hat.max()) for d in diags), ess_min=min(float(d.ess.min()) for d in diags),
                   bfmi_min=min(float(d.bfmi.min()) for d in diags), divergences=sum(d.divergences for d in diags))
    return out


def run_task(task) -> list[dict]:
    """All configs on one (cell, seed) dataset; failures land in ``error``."""
    spec, master, cell, density, s = task
    data_seed = derive_seed(master, spec.name, cell, s)
    fit_seed = derive_seed(master, spec.name, cell, s, "fit")
    data = generate(replace(spec.dgp, density=density, seed=data_seed))
    rows = []
    alpha = sev = ""
    if "auto_severity" in spec.extra_metrics:
        try:
            rec = auto_severity(data.dataset)
            alpha, sev = rec.alpha_hat if rec.alpha_hat is not None else "", rec.severity.value
        except Exception as exc:  # noqa: BLE001 - recorded per row
            alpha, sev = "", f"error: {exc}"
    for cname, cfg in spec.configs:
        row = _blank_row(spec, cell, density, cname, s, data_seed)
        row.update(alpha_hat=alpha, auto_severity=sev)
        cfg = cfg.with_(master_seed=fit_seed)
        try:
            row.update(evaluate_fit(fit(data.dataset, cfg), data))
            if "dispersion" in spec.extra_metrics:
                row["dispersion"] = dispersion_ratio(data.dataset, cfg, spec.dispersion_repeats)
        except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
            row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        rows.append(row)
    return rows


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("ROBUST_CATE_JOBS")
        jobs = int(env) if env else 1
    return max(1, int(jobs))


def run_benchmark(spec: BenchmarkSpec, master_seed: int = 0, jobs: int | None = None) -> list[dict]:
    tasks = list(spec.tasks(master_seed))
    jobs = resolve_jobs(jobs)
    if jobs == 1:
        chunks = [run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(run_task, tasks))
    rows = [r for chunk in chunks for r in chunk]
    order = {name: i for i, (name, _) in enumerate(spec.configs)}
    rows.sort(key=lambda r: (r["cell"], order[r["config"]], r["seed_index"]))
    return rows


def _num(rows, key):
    vals = [r[key] for r in rows if r.get(key, "") != ""]
    return np.asarray(vals, dtype=float)


def _mean(rows, key):
    v = _num(rows, key)
    return float(v.mean()) if v.size else ""


def aggregate(rows: list[dict]) -> list[dict]:
    groups = {}
    for r in rows:
        groups.setdefault((r["benchmark"], r["cell"], r["density"], r["config"]), []).append(r)
    out = []
    for (bench, _, density, cname), grp in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[1][0]["config"])):
        ok = [r for r in grp if not r["error"]]
        agg = {k: "" for k in AGG_FIELDS}
        agg.update(benchmark=bench, density=density, config=cname, n_ok=len(ok), n_error=len(grp) - len(ok))
        if ok:
            cov = _num(ok, "covered")
            lo, hi = wilson_interval(int(cov.sum()), int(cov.size))
            agg.update(ate_mean=_mean(ok, "ate_mean"), bias=float(np.mean(_num(ok, "ate_mean") - _num(ok, "ate_true"))),
                       rmse=float(np.sqrt(_num(ok, "ate_sq_error").mean())), mean_ate_error=_mean(ok, "ate_error"),
                       pehe=_mean(ok, "pehe"), coverage=float(cov.mean()), coverage_lo=lo, coverage_hi=hi,
                       width=_mean(ok, "width"), regret=_mean(ok, "regret"),
                       fraction_treated=_mean(ok, "fraction_treated"), subgroup_mean=_mean(ok, "subgroup_mean"),
                       subgroup_coverage=_mean(ok, "subgroup_covered"), dispersion=_mean(ok, "dispersion"),
                       alpha_hat=_mean(ok, "alpha_hat"))
        out.append(agg)
    return out


def write_csv(rows: list[dict], fields: list[str], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            # plain float repr; numpy 2 scalars would print as np.float64(...)
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def influence_overlay(c: float = 1.34, nu: float = 3.0, sigma: float = 1.0, r_max: float = 6.0, n: int = 241):
    """Rows (r, psi_welsch, psi_student_t) for plotting the two influence functions."""
    r = np.linspace(-r_max, r_max, n)
    psi_w = Welsch(c).psi(r)
    psi_t = (nu + 1.0) * r / (nu * sigma**2 + r**2)
    return [{"r": float(a), "psi_welsch": float(b), "psi_student_t": float(t)} for a, b, t in zip(r, psi_w, psi_t)]


def residual_histogram(residuals, bins: int = 60, r_max: float = 6.0):
    """Histogram of MAD-standardised residuals, clipped to [-r_max, r_max]."""
    r = np.asarray(residuals, dtype=float)
    s = np.median(np.abs(r - np.median(r))) / 0.6745
    z = np.clip((r - np.median(r)) / (s if s > 0 else 1.0), -r_max, r_max)
    counts, edges = np.histogram(z, bins=bins, range=(-r_max, r_max))
    return [{"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]), "count": int(counts[i])} for i in range(bins)]


def write_plot_data(spec: BenchmarkSpec, rows: list[dict], agg: list[dict], out_dir: Path, master_seed: int) -> None:
    """Density sweep, influence overlay with residual histograms, and Hill plot data."""
    from .tails import hill_plot_data
    from .gbt import GbtParams, fit_gbt

    write_csv([{k: a[k] for k in ("density", "config", "rmse", "bias", "coverage", "width", "pehe")} for a in agg],
              ["density", "config", "rmse", "bias", "coverage", "width", "pehe"], out_dir / "density_sweep.csv")
    write_csv(influence_overlay(), ["r", "psi_welsch", "psi_student_t"], out_dir / "influence.csv")
    hist_rows, hill_rows = [], []
    for cell, density in enumerate(spec.densities):
        data = generate(replace(spec.dgp, density=float(density), seed=derive_seed(master_seed, spec.name, cell, 0)))
        ds = data.dataset
        Z = np.column_stack([ds.X, ds.w])
        resid = ds.y - fit_gbt(Z, ds.y, GbtParams()).predict(Z)
        for h in residual_histogram(resid):
            hist_rows.append({"density": float(density), **h})
        try:
            for k, a in hill_plot_data(resid):
                hill_rows.append({"density": float(density), "k": k, "alpha_hat": a})
        except ValueError:
            pass
    write_csv(hist_rows, ["density", "bin_lo", "bin_hi", "count"], out_dir / "residual_histogram.csv")
    write_csv(hill_rows, ["density", "k", "alpha_hat"], out_dir / "hill_plot.csv")
