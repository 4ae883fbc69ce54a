"""Benchmark of SGMCMC local learning coefficient estimators on deep linear networks."""

from .analytic import analytic_llc, attach_llc, find_sigma, mc_volume_exponent
from .bench import SweepConfig, generate_problems, preset, run_sweep, summarize
from .dln import DatasetSpec, DlnArchitecture, DlnParams
from .estimator import EstimatorConfig, LLCEstimator, estimate_llc, wbic_beta
from .exceptions import (
    AnalyticLLCError,
    ConfigurationError,
    ContractViolation,
    LLCBenchError,
)
from .samplers import SGHMC, SGLD, SGNHT, AdamSGLD, RMSPropSGLD, make_sampler, run_chain
from .taskgen import TaskSpec, make_task

__version__ = "0.1.0"

__all__ = [
    "AdamSGLD", "AnalyticLLCError", "ConfigurationError", "ContractViolation",
    "DatasetSpec", "DlnArchitecture", "DlnParams", "EstimatorConfig", "LLCBenchError",
    "LLCEstimator", "RMSPropSGLD", "SGHMC", "SGLD", "SGNHT", "SweepConfig", "TaskSpec",
    "analytic_llc", "attach_llc", "estimate_llc", "find_sigma", "generate_problems",
    "make_sampler", "make_task", "mc_volume_exponent", "preset", "run_chain", "run_sweep",
    "summarize", "wbic_beta",
]
