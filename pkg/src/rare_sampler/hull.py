"""Orthogonally monotone hull of safe samples and decision-threshold tuning.

The hull of the safe Stage-1 points is the union of axis-aligned rectangles
anchored at the origin; its complement outer-approximates a coordinatewise
monotone dangerous set. Only the Pareto-maximal points are kept: a rectangle
dominated by another adds nothing to the union.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .relunet import ReluNet


def _check_nonneg(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size:
        bad = np.argwhere(X < 0.0)
        if bad.size:
            i, j = bad[0]
            raise ContractError(
                f"point {i} has negative coordinate {j} ({X[i, j]}); "
                "map the problem into the positive orthant first"
            )
    return X


@dataclass(frozen=True)
class MonotoneHull:
    """Pareto-maximal corners of the safe set's rectangle union."""

    corners: np.ndarray  # (k, d), possibly k == 0
    dim: int

    def __len__(self) -> int:
        return self.corners.shape[0]

    def contains(self, x: np.ndarray) -> bool | np.ndarray:
        """True iff some corner dominates x coordinatewise."""
        X = _check_nonneg(x)
        if X.shape[-1] != self.dim:
            raise ContractError(f"point dimension {X.shape[-1]} != hull dimension {self.dim}")
        if len(self) == 0:
            out = np.zeros(X.shape[0], dtype=bool)
        else:
            out = (X[:, None, :] <= self.corners[None, :, :]).all(axis=2).any(axis=1)
        return bool(out[0]) if np.asarray(x).ndim == 1 else out


def build_hull(safe_points: np.ndarray, dim: int | None = None) -> MonotoneHull:
    """Reduce safe points to their Pareto-maximal subset.

    Requires all coordinates >= 0. Membership is unchanged by the reduction:
    a point dominated by another contributes a sub-rectangle of the other's.
    """
    X = np.asarray(safe_points, dtype=float)
    if X.size == 0:
        if dim is None and X.ndim == 2:
            dim = X.shape[1]
        if dim is None:
            raise ContractError("empty input needs an explicit dimension")
        return MonotoneHull(np.empty((0, dim)), dim)
    X = _check_nonneg(X)
    d = X.shape[1]
    # Scan in decreasing lexicographic order; a point can only be dominated
    # by one already kept.
    order = np.lexsort(X.T[::-1])[::-1]
    kept: list[np.ndarray] = []
    kept_arr = np.empty((0, d))
    for i in order:
        p = X[i]
        if kept and ((p <= kept_arr).all(axis=1) & (p < kept_arr).any(axis=1)).any():
            continue
        if kept and (p == kept_arr).all(axis=1).any():
            continue
        kept.append(p)
        kept_arr = np.asarray(kept)
    return MonotoneHull(kept_arr, d)


def contains(hull: MonotoneHull, x: np.ndarray):
    return hull.contains(x)


def tune_kappa(net: ReluNet, hull: MonotoneHull, candidates: np.ndarray,
               floor: float | None = None, to_input=None) -> float:
    """Largest score threshold whose negative-prediction region stays in the hull.

    Finite-candidate surrogate: kappa_hat = min score over candidates outside
    the hull, so every outside-hull candidate satisfies score >= kappa_hat
    (zero false negatives on the candidate set). If every candidate falls
    inside the hull the condition is vacuous and the floor is returned
    (default: min candidate score - 1).

    candidates live in hull (positive-orthant) coordinates; to_input maps
    them back to net inputs when the problem was reoriented.
    """
    C = _check_nonneg(candidates)
    if C.shape[0] == 0:
        raise ContractError("candidate set must be nonempty")
    inputs = C if to_input is None else np.atleast_2d(to_input(C))
    scores = net.scores(inputs)
    if floor is None:
        floor = float(scores.min()) - 1.0
    outside = ~hull.contains(C)
    if not outside.any():
        return float(floor)
    return float(scores[outside].min())
