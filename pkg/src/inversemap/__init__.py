"""Amortized variational inference for Bayesian inverse problems.

Learns inverse maps from observations to full-rank Gaussian posterior
approximations by training a three-headed amortization network against
a stochastic evidence-lower-bound objective, with built-in benchmark
problems, an adaptive Metropolis baseline, and evaluation metrics.
"""

from .guide import AmortNet, GuideParams, amort_forward, build_amort_net, guide_entropy, guide_log_density, guide_sample
from .problems import Problem, get_problem, linear_gaussian_posterior, linear_gaussian_problem, problem_names
from .trainer import TrainConfig, train
from .mcmc import Chain, McmcConfig, chain_diagnostics, rwm_sample
from .metrics import evaluate_ks, ks_statistic, resim_error

__all__ = [
    "AmortNet",
    "GuideParams",
    "Problem",
    "TrainConfig",
    "Chain",
    "McmcConfig",
    "amort_forward",
    "build_amort_net",
    "chain_diagnostics",
    "evaluate_ks",
    "get_problem",
    "guide_entropy",
    "guide_log_density",
    "guide_sample",
    "ks_statistic",
    "linear_gaussian_posterior",
    "linear_gaussian_problem",
    "problem_names",
    "resim_error",
    "rwm_sample",
    "train",
]
