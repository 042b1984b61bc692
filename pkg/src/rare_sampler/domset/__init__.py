"""Dominating-point extraction: big-M encoding, branch-and-bound, oracle."""

from .encoding import BigMEncoding, Box, default_box, propagate_bounds
from .oracle import enumerate_dominating_oracle
from .qp import QpResult, nearest_point_qp, polytope_qp_clarabel, stationarity_residual
from .search import (Cut, DominatingSet, MinRateResult, find_dominating_set,
                     solve_min_rate)

__all__ = [
    "BigMEncoding", "Box", "default_box", "propagate_bounds",
    "enumerate_dominating_oracle",
    "QpResult", "nearest_point_qp", "polytope_qp_clarabel", "stationarity_residual",
    "Cut", "DominatingSet", "MinRateResult", "find_dominating_set", "solve_min_rate",
]
