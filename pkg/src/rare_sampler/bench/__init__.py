"""Benchmark problem suite: analytic testbeds, cut-in scenario, classifier noise."""

from .cutin import (AGGRESSIVE_TAILGATER, CutInState, IdmParams, idm_accel,
                    simulate_cut_in, simulate_cut_in_batch, trajectory)
from .problems import (GAMMA_SWEEP_DEFAULT, OrientMap, SafetyProblem,
                       build_problem, halfspace_union_mu, load_references,
                       make_cut_in, make_halfspace_union,
                       make_perturbed_classifier, make_staircase,
                       register_problem, synthetic_base_classifier)

__all__ = [
    "AGGRESSIVE_TAILGATER", "CutInState", "IdmParams", "idm_accel",
    "simulate_cut_in", "simulate_cut_in_batch", "trajectory",
    "GAMMA_SWEEP_DEFAULT", "OrientMap", "SafetyProblem", "build_problem",
    "halfspace_union_mu", "load_references", "make_cut_in",
    "make_halfspace_union", "make_perturbed_classifier", "make_staircase",
    "register_problem", "synthetic_base_classifier",
]
