"""Ground-truth dominating-set extraction by exhaustive pattern enumeration.

Test oracle for the branch-and-bound path: fix each of the 2^H activation
patterns, solve the per-pattern QP with the interior-point backend (a
different solver than the leaf active-set route), and replay the sequential
cut logic on the pooled per-pattern minima. When a new cut lands, only the
patterns whose current minimizer it invalidates are re-solved; a minimizer
that survives a new constraint is still optimal for its pattern.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import linprog

from ..core import GaussianNature
from ..errors import ContractError, SolverError
from ..relunet import ReluNet
from .encoding import Box, propagate_bounds
from .qp import polytope_qp_clarabel
from .search import (DEFAULT_MARGIN, Cut, DominatingSet, box_rows, cut_rows,
                     leaf_rows)

_MAX_ORACLE_POINTS = 10_000


@dataclass
class _Entry:
    pattern: np.ndarray
    feasible: bool
    y: np.ndarray | None
    value: float


def enumerate_dominating_oracle(net: ReluNet, nature: GaussianNature,
                                kappa: float, box: Box | None = None,
                                max_points: int | None = None,
                                margin: float = DEFAULT_MARGIN) -> DominatingSet:
    """Exhaustive 2^H replay of the sequential dominating-point loop."""
    from .encoding import default_box

    H = net.n_hidden
    if H > 16:
        raise ContractError(f"oracle refuses nets with {H} > 16 hidden neurons")
    if box is None:
        box = default_box(nature)
    enc = propagate_bounds(net, box)
    forced = np.concatenate(enc.hidden_status()).astype(np.int8) if H else np.zeros(0, np.int8)
    free_idx = np.flatnonzero(forced == 0)

    bA, bb = box_rows(nature, box)
    d = nature.dim

    def solve_pattern(pattern: np.ndarray, cuts: list[Cut]) -> _Entry:
        A, b = leaf_rows(net, nature, pattern, kappa)
        cA, cb = cut_rows(nature, cuts)
        A_all = np.vstack([A, bA, cA])
        b_all = np.concatenate([b, bb, cb])
        # HiGHS certifies (in)feasibility of the razor-thin polytopes the
        # cut margin produces far more robustly than an interior point
        lp = linprog(np.zeros(d), A_ub=A_all, b_ub=b_all,
                     bounds=[(None, None)] * d, method="highs")
        if lp.status == 2:
            return _Entry(pattern, False, None, np.inf)
        err: Exception | None = None
        for tol in (1e-10, 1e-8, 1e-6):
            try:
                res = polytope_qp_clarabel(d, d, np.empty((0, d)), np.empty(0),
                                           A_all, b_all, tol=tol)
            except SolverError as exc:
                err = exc
                continue
            if res.status == "optimal":
                return _Entry(pattern, True, res.y[:d], res.value)
            return _Entry(pattern, False, None, np.inf)
        raise SolverError(f"oracle pattern QP failed at every tolerance: {err}")

    pool: list[_Entry] = []
    for bits in product((1, -1), repeat=free_idx.size):
        pattern = forced.copy()
        pattern[free_idx] = bits
        pattern[pattern == 0] = 1  # unreachable; keeps the pattern total
        pool.append(solve_pattern(pattern, []))

    cuts: list[Cut] = []
    points: list[np.ndarray] = []
    rates: list[float] = []
    flags: list[bool] = []
    cap = max_points if max_points is not None else _MAX_ORACLE_POINTS
    status = "capped"
    while len(points) < cap:
        live = [e for e in pool if e.feasible]
        if not live:
            status = "exhausted"
            break
        best = min(live, key=lambda e: e.value)
        x_star = nature.unwhiten(best.y)
        points.append(x_star)
        rates.append(best.value)
        flags.append(box.on_boundary(x_star))
        cuts.append(Cut.from_point(nature, x_star, margin))
        row, rhs = cuts[-1].whitened(nature)
        for e in pool:
            if e.feasible and float(row @ e.y) > rhs - 1e-12:
                updated = solve_pattern(e.pattern, cuts)
                e.feasible, e.y, e.value = updated.feasible, updated.y, updated.value
    else:
        if max_points is None:
            raise SolverError("oracle exceeded the safety cap on dominating points")

    pts = np.asarray(points) if points else np.empty((0, d))
    return DominatingSet(pts, rates, status, kappa, flags)
