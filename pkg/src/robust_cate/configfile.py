"""INI-style config files for fits and benchmarks (schema in docs/formats.md)."""
from __future__ import annotations

import configparser
from dataclasses import replace

from .basis import parse_basis
from .dgp import DEFAULT_PARAMS, DgpKind, DgpSpec
from .losses import Huber
from .nuisance import Severity
from .posterior import LikelihoodSpec, PriorSpec, SamplerConfig
from .stages import FitConfig, ModularConfig

FIT_KEYS = {
    "severity", "basis", "likelihood", "welsch_c", "tukey_c", "nu", "sigma", "eta", "mad_rescale",
    "prior_family", "prior_scale", "k_folds", "use_overlap", "normalize_y", "calibrate_eta", "eta_contrast",
    "ridge_lambda", "modular_m", "pooling", "chains", "warmup", "samples", "target_accept", "max_tree_depth",
    "seed", "severity_sets_welsch_c", "delta", "n_trees", "max_depth", "learning_rate", "min_samples_leaf",
    "extremes_threshold", "extremes_alpha", "llb_grid", "llb_replicates", "rbci_grid",
}


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _floats(v: str) -> tuple:
    return tuple(float(x) for x in v.split(",") if x.strip())


def fit_config_from_mapping(section: dict, base: FitConfig | None = None) -> FitConfig:
    """Build a FitConfig from string key/value pairs; unknown keys are errors."""
    unknown = set(section) - FIT_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = base or FitConfig()
    g = section.get
    try:
        kw = {}
        if "severity" in section:
            kw["severity"] = g("severity").strip().lower()
        if "basis" in section:
            kw["basis"] = parse_basis(g("basis"))
        lik = cfg.likelihood
        kind = g("likelihood", lik.kind).strip().lower()
        if kind == "welsch":
            lik = LikelihoodSpec.welsch(float(g("welsch_c", lik.c if lik.kind == "welsch" else 1.34)))
        elif kind == "tukey":
            lik = LikelihoodSpec.tukey(float(g("tukey_c", 4.685)))
        elif kind == "gaussian":
            lik = LikelihoodSpec.gaussian(float(g("sigma")) if "sigma" in section else None)
        elif kind == "student_t":
            lik = LikelihoodSpec.student_t(float(g("nu", 3.0)), float(g("sigma")) if "sigma" in section else None)
        else:
            raise ConfigError(f"unknown likelihood {kind!r}")
        lik = replace(lik, eta=float(g("eta", cfg.likelihood.eta)),
                      mad_rescale=_bool(g("mad_rescale", "false")))
        kw["likelihood"] = lik
        if "prior_family" in section or "prior_scale" in section:
            kw["prior"] = PriorSpec(g("prior_family", "student_t"), float(g("prior_scale", 10.0)))
        if "k_folds" in section:
            kw["k_folds"] = int(g("k_folds"))
        if "use_overlap" in section:
            v = g("use_overlap").strip().lower()
            kw["use_overlap"] = None if v == "auto" else _bool(v)
        if "normalize_y" in section:
            kw["normalize_y_for_nuisance"] = _bool(g("normalize_y"))
        if "calibrate_eta" in section:
            kw["calibrate_eta"] = g("calibrate_eta").strip().lower()
        if "eta_contrast" in section:
            kw["eta_contrast"] = _floats(g("eta_contrast"))
        if "ridge_lambda" in section:
            kw["ridge_lambda"] = float(g("ridge_lambda"))
        if "llb_grid" in section:
            kw["llb_grid"] = _floats(g("llb_grid"))
        if "llb_replicates" in section:
            kw["llb_replicates"] = int(g("llb_replicates"))
        if "rbci_grid" in section:
            kw["rbci_grid"] = _floats(g("rbci_grid"))
        m = int(g("modular_m", "0"))
        if m:
            kw["modular"] = ModularConfig(m, g("pooling", "concatenate").strip().lower())
        s = cfg.sampler
        kw["sampler"] = SamplerConfig(int(g("chains", s.chains)), int(g("warmup", s.warmup)),
                                      int(g("samples", s.samples)), float(g("target_accept", s.target_accept)),
                                      int(g("max_tree_depth", s.max_tree_depth)))
        if "seed" in section:
            kw["master_seed"] = int(g("seed"))
        if "severity_sets_welsch_c" in section:
            kw["severity_sets_welsch_c"] = _bool(g("severity_sets_welsch_c"))
        over = dict(cfg.gbt_overrides or {})
        if "delta" in section:
            over["loss"] = Huber(float(g("delta")))
        for key, conv in (("n_trees", int), ("max_depth", int), ("learning_rate", float), ("min_samples_leaf", int)):
            if key in section:
                over[key] = conv(g(key))
        if over:
            kw["gbt_overrides"] = over
        if ("extremes_threshold" in section) != ("extremes_alpha" in section):
            raise ConfigError("extremes_threshold and extremes_alpha must be given together")
        if "extremes_threshold" in section:
            kw["extremes"] = (float(g("extremes_threshold")), float(g("extremes_alpha")))
        return replace(cfg, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    p.optionxform = str
    return p


def load_fit_config(path) -> FitConfig:
    p = _parser()
    if not p.read(path):
        raise ConfigError(f"cannot read config file {path}")
    if "fit" not in p:
        raise ConfigError("config file needs a [fit] section")
    return fit_config_from_mapping(dict(p["fit"]))


def load_benchmark(path):
    """Parse a benchmark spec into a BenchmarkSpec."""
    from .bench import BenchmarkSpec

    p = _parser()
    if not p.read(path):
        raise ConfigError(f"cannot read benchmark file {path}")
    if "benchmark" not in p:
        raise ConfigError("benchmark file needs a [benchmark] section")
    b = dict(p["benchmark"])
    try:
        kind = DgpKind(b.get("dgp", "whale"))
        params = {}
        for key, val in b.items():
            if key.startswith("param."):
                name = key[len("param."):]
                default = DEFAULT_PARAMS[kind].get(name)
                params[name] = val.strip() if isinstance(default, str) else float(val)
        densities = _floats(b.get("densities", "0"))
        if not densities:
            raise ConfigError("density grid is empty")
        base = DgpSpec(kind, int(b.get("n", 1000)), int(b.get("dim", 5)), densities[0], params, 0)
        configs = []
        for name in p.sections():
            if name.startswith("config:"):
                configs.append((name[len("config:"):], fit_config_from_mapping(dict(p[name]))))
        if not configs:
            configs.append(("default", FitConfig()))
        metrics = tuple(m.strip() for m in b.get("metrics", "").split(",") if m.strip())
        return BenchmarkSpec(name=b.get("name", "benchmark"), dgp=base, densities=densities,
                             seeds=int(b.get("seeds", 3)), configs=configs, extra_metrics=metrics,
                             dispersion_repeats=int(b.get("dispersion_repeats", 5)))
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def severity_names() -> list[str]:
    return [s.value for s in Severity] + ["auto"]
