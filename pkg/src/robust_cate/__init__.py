"""Robust Bayesian CATE estimation: cross-fitted robust nuisances, doubly
robust pseudo-outcomes and a Welsch generalised posterior."""
from .basis import BasisSpec, evaluate_basis, parse_basis
from .dgp import DgpKind, DgpSpec, generate
from .nuisance import CausalDataset, Severity, cross_fit
from .pipeline import FitResult, fit, predict_cate
from .posterior import LikelihoodSpec, PriorSpec, SamplerConfig
from .stages import EtaMode, FitConfig, ModularConfig, Pooling

__all__ = [
    "BasisSpec", "CausalDataset", "DgpKind", "DgpSpec", "EtaMode", "FitConfig", "FitResult", "LikelihoodSpec",
    "ModularConfig", "Pooling", "PriorSpec", "SamplerConfig", "Severity", "cross_fit", "evaluate_basis", "fit",
    "generate", "parse_basis", "predict_cate",
]
