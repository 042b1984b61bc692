"""rare-sampler: rare-event probability estimation with classifier-guided
importance sampling.

Learn the dangerous set with a small ReLU net, extract its dominating
points by sequential mixed-integer quadratic optimization, center a
Gaussian mixture proposal on them, and estimate the event probability with
unbiased (Deep IS) or certified-conservative (Robust / Iterative Robust
Deep IS) importance-sampling estimators.
"""

from .core import GaussianNature, RngStream, required_sample_size, standard_nature
from .domset import (BigMEncoding, Box, Cut, DominatingSet, MinRateResult,
                     default_box, enumerate_dominating_oracle,
                     find_dominating_set, propagate_bounds, solve_min_rate)
from .errors import ConfigError, ContractError, SolverError
from .estimators import (EstimateTrace, MixtureProposal, RunResult, acc_rate,
                         deg_conservativeness, estimate_deep_is, estimate_nmc,
                         estimate_robust, geometric_checkpoints,
                         log_likelihood_ratio, relative_error, sample_mixture,
                         stop_at)
from .hull import MonotoneHull, build_hull, contains, tune_kappa
from .pipeline import (PipelineOptions, batch_sizes, collect_stage1,
                       run_deep_is, run_iterative, run_robust, tune_threshold)
from .relunet import LabeledDataset, ReluNet, TrainConfig, loss_gradient, train

__version__ = "0.1.0"

__all__ = [
    "GaussianNature", "RngStream", "required_sample_size", "standard_nature",
    "BigMEncoding", "Box", "Cut", "DominatingSet", "MinRateResult",
    "default_box", "enumerate_dominating_oracle", "find_dominating_set",
    "propagate_bounds", "solve_min_rate",
    "ConfigError", "ContractError", "SolverError",
    "EstimateTrace", "MixtureProposal", "RunResult", "acc_rate",
    "deg_conservativeness", "estimate_deep_is", "estimate_nmc",
    "estimate_robust", "geometric_checkpoints", "log_likelihood_ratio",
    "relative_error", "sample_mixture", "stop_at",
    "MonotoneHull", "build_hull", "contains", "tune_kappa",
    "PipelineOptions", "batch_sizes", "collect_stage1", "run_deep_is",
    "run_iterative", "run_robust", "tune_threshold",
    "LabeledDataset", "ReluNet", "TrainConfig", "loss_gradient", "train",
    "__version__",
]
