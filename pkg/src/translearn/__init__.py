"""Transductive active learning over Gaussian-process beliefs.

A library and CLI for directed data selection: information-, variance-,
and correlation-based acquisition rules over finite domains, diverse
conditional batch selection, safe Bayesian optimization with safe-set
expansion, and the theory instruments (information capacity, irreducible
uncertainty, task complexity) that characterize them.
"""

from .acquisition import DecisionRule, ScoreReport, select_next
from .batch import BatchRequest, select_batch
from .gp import (
    FiniteDomain,
    GaussianBelief,
    NoiseModel,
    Observation,
    condition,
    entropy,
    mutual_information,
    prior_belief,
    rank_one_condition,
)
from .kernels import Kernel, kernel_matrix, kernel_value
from .safebo import GroundTruth, SafeBoState, safebo_step, safeopt_step, simple_regret

__version__ = "0.1.0"

__all__ = [
    "DecisionRule",
    "ScoreReport",
    "select_next",
    "BatchRequest",
    "select_batch",
    "FiniteDomain",
    "GaussianBelief",
    "NoiseModel",
    "Observation",
    "condition",
    "entropy",
    "mutual_information",
    "prior_belief",
    "rank_one_condition",
    "Kernel",
    "kernel_matrix",
    "kernel_value",
    "GroundTruth",
    "SafeBoState",
    "safebo_step",
    "safeopt_step",
    "simple_regret",
    "__version__",
]
