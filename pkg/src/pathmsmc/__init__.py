"""Marginal SMC with path-reuse ratio estimates for Ising models with intractable Z."""
from ._backend import BACKEND
from .estimators import (AuxDraw, Path, abc_mav_weight, exchange_log_ratio, mav_log_ratio, path_log_ratio,
                         sav_log_ratio)
from .harness import ExperimentConfig, generate_data, ground_truth, run_comparison
from .kdtree import BoundingBox, HistoryIndex
from .mcmc import abc_mcmc, exchange_mcmc, sav_mcmc
from .model import (ExactIsingModel, InvalidInputError, IsingModel, IsingSpec, Order, brute_force_log_z,
                    brute_force_posterior, gibbs_sweep, log_gamma, simulate_x, suff_stats)
from .paths import build_path, estimate_v, score_path
from .priors import PriorSpec
from .smc import (AnnealSchedule, ParticleSet, SMCConfig, evidence_estimate, run_path_msmc, run_sav_msmc)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AuxDraw", "Path", "abc_mav_weight", "exchange_log_ratio", "mav_log_ratio", "path_log_ratio",
    "sav_log_ratio", "ExperimentConfig", "generate_data", "ground_truth", "run_comparison", "BoundingBox",
    "HistoryIndex", "abc_mcmc", "exchange_mcmc", "sav_mcmc", "ExactIsingModel", "InvalidInputError",
    "IsingModel", "IsingSpec", "Order", "brute_force_log_z", "brute_force_posterior", "gibbs_sweep",
    "log_gamma", "simulate_x", "suff_stats", "build_path", "estimate_v", "score_path", "PriorSpec",
    "AnnealSchedule", "ParticleSet", "SMCConfig", "evidence_estimate", "run_path_msmc", "run_sav_msmc",
]
