"""Bayesian additive regression trees with particle Gibbs, CGM and GrowPrune samplers."""

from .data import HypercubeSpec, gen_hypercube, load_csv, predict, scale_labels
from .diagnostics import ChainTrace, ess, ess_report, mse, read_trace, write_trace
from .model import BartHyperParams, calibrate_noise_prior
from .samplers import SamplerConfig, run_chain
from .state import EnsembleState
from .tree import Dataset, DecisionTree, LabelTransform

__version__ = "0.1.0"

__all__ = [
    "BartHyperParams",
    "ChainTrace",
    "Dataset",
    "DecisionTree",
    "EnsembleState",
    "HypercubeSpec",
    "LabelTransform",
    "SamplerConfig",
    "calibrate_noise_prior",
    "ess",
    "ess_report",
    "gen_hypercube",
    "load_csv",
    "mse",
    "predict",
    "read_trace",
    "run_chain",
    "scale_labels",
    "write_trace",
]
