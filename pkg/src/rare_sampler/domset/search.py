"""Sequential dominating-point extraction by branch-and-bound.

A dominating point is a global minimizer of the Gaussian rate over the
learned region {g(x) >= kappa} minus the half-spaces already claimed by
earlier points. Everything runs in whitened coordinates y = chol^-1(x-mean)
where the rate is ||y||^2, the cut anchored at x_prev with whitened image
y_prev reads y_prev . y <= ||y_prev||^2 - tau, and the leaf subproblems are
nearest-point-to-origin QPs.

Branch-and-bound contract: one binary per undecided hidden neuron; node
lower bounds come from the convex relaxation with unfixed ReLUs replaced by
their interval triangle envelopes; leaves (all binaries fixed) reduce to a
strictly convex QP in y solved by the active-set routine; branching picks
the neuron with the largest complementarity violation; best-first order,
ties by lowest node id.
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from ..core import GaussianNature
from ..errors import ContractError, SolverError
from ..relunet import ReluNet
from .encoding import BigMEncoding, Box, default_box, propagate_bounds
from .qp import QpResult, nearest_point_qp, polytope_qp_clarabel

log = logging.getLogger("rare_sampler.domset")

DEFAULT_MARGIN = 1e-6
DEFAULT_GAP = 1e-6
_CLEAN_TOL = 1e-7
_MAX_NODES = 200_000


@dataclass(frozen=True)
class Cut:
    """Half-space excluding the region claimed by an earlier dominating point.

    Satisfied at x iff normal . (x - anchor) <= -margin, the closed version
    of the paper's strict inequality.
    """

    anchor: np.ndarray
    normal: np.ndarray
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if self.margin <= 0:
            raise ContractError("cut margin must be positive")
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))

    @classmethod
    def from_point(cls, nature: GaussianNature, point: np.ndarray,
                   margin: float = DEFAULT_MARGIN) -> "Cut":
        point = np.asarray(point, dtype=float)
        delta = point - nature.mean
        half = solve_triangular(nature.chol, delta, lower=True)
        normal = solve_triangular(nature.chol.T, half, lower=False)
        return cls(point, normal, margin)

    def satisfied(self, x: np.ndarray, slack: float = 1e-9) -> bool:
        return float(self.normal @ (np.asarray(x) - self.anchor)) <= -self.margin + slack

    def whitened(self, nature: GaussianNature) -> tuple[np.ndarray, float]:
        """Row (a, rhs) with a.y <= rhs equivalent to the cut."""
        y_anchor = nature.whiten(self.anchor)
        return y_anchor, float(y_anchor @ y_anchor) - self.margin


@dataclass
class MinRateResult:
    x: np.ndarray
    rate: float
    pattern: list[np.ndarray]
    on_box_boundary: bool
    gap: float
    nodes_expanded: int


@dataclass
class DominatingSet:
    """Ordered dominating points with their rates and termination status."""

    points: np.ndarray  # (k, d)
    rates: list[float]
    status: str  # "exhausted" | "capped"
    kappa: float
    boundary_flags: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_json(self) -> dict:
        return {
            "kappa": self.kappa,
            "status": self.status,
            "points": self.points.tolist(),
            "rates": list(self.rates),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DominatingSet":
        points = np.asarray(obj["points"], dtype=float)
        if points.size == 0:
            points = points.reshape(0, 0)
        return cls(points, [float(r) for r in obj["rates"]],
                   obj["status"], float(obj["kappa"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


# ---------------------------------------------------------------------------
# constraint-row assembly (whitened y coordinates throughout)


def box_rows(nature: GaussianNature, box: Box) -> tuple[np.ndarray, np.ndarray]:
    C = nature.chol
    A = np.vstack([C, -C])
    b = np.concatenate([box.hi - nature.mean, nature.mean - box.lo])
    return A, b


def cut_rows(nature: GaussianNature, cuts: list[Cut]) -> tuple[np.ndarray, np.ndarray]:
    d = nature.dim
    if not cuts:
        return np.empty((0, d)), np.empty(0)
    rows, rhs = zip(*(c.whitened(nature) for c in cuts))
    return np.vstack(rows), np.asarray(rhs)


def leaf_rows(net: ReluNet, nature: GaussianNature, pattern: np.ndarray,
              kappa: float) -> tuple[np.ndarray, np.ndarray]:
    """Sign-consistency and score rows for a fully fixed activation pattern.

    pattern is the flat +-1 vector over hidden neurons. With the pattern
    fixed the score is affine in y, so rows are: -pre <= 0 for active
    neurons, pre <= 0 for inactive ones, and score >= kappa.
    """
    A_aff = nature.chol.copy()
    c_aff = nature.mean.copy()
    rows, rhs = [], []
    offset = 0
    for W, b in net.layers[:-1]:
        P = W @ A_aff
        q = W @ c_aff + b
        pat = pattern[offset:offset + W.shape[0]]
        offset += W.shape[0]
        active = pat > 0
        rows.append(np.where(active[:, None], -P, P))
        rhs.append(np.where(active, q, -q))
        A_aff = P * active[:, None]
        c_aff = q * active
    W, b = net.layers[-1]
    s_row = (W @ A_aff)[0]
    s_const = float((W @ c_aff + b)[0])
    rows.append(-s_row[None, :])
    rhs.append(np.array([s_const - kappa]))
    return np.vstack(rows), np.concatenate(rhs)


class _RelaxationBuilder:
    """Extended-space (y, s) constraint assembly for node relaxations."""

    def __init__(self, net: ReluNet, nature: GaussianNature, enc: BigMEncoding,
                 kappa: float, cuts: list[Cut], box: Box):
        self.net = net
        self.nature = nature
        self.enc = enc
        self.kappa = kappa
        self.d = nature.dim
        self.hidden = net.hidden_widths
        self.H = sum(self.hidden)
        self.n_vars = self.d + self.H
        self.s_offsets = np.cumsum([self.d] + self.hidden[:-1]).tolist()

        bA, bb = box_rows(nature, box)
        cA, cb = cut_rows(nature, cuts)
        base_A = np.vstack([bA, cA])
        self.base_in = np.hstack([base_A, np.zeros((base_A.shape[0], self.H))])
        self.base_in_rhs = np.concatenate([bb, cb])

        # pre_i = T_i u + t_i
        self.T, self.t = [], []
        prev_block = slice(0, self.d)
        prev_is_input = True
        for i, (W, b) in enumerate(net.layers):
            T = np.zeros((W.shape[0], self.n_vars))
            if prev_is_input:
                T[:, prev_block] = W @ nature.chol
                t = W @ nature.mean + b
            else:
                T[:, prev_block] = W
                t = b.copy()
            self.T.append(T)
            self.t.append(t)
            if i < len(net.layers) - 1:
                start = self.s_offsets[i]
                prev_block = slice(start, start + W.shape[0])
                prev_is_input = False

    def neuron_index(self, layer: int, j: int) -> int:
        return sum(self.hidden[:layer]) + j

    def assemble(self, fixes: np.ndarray):
        """fixes: flat int8 (+1 active, -1 inactive, 0 free) over hidden neurons."""
        eq_rows, eq_rhs, in_rows, in_rhs = [], [], [], []
        offset = 0
        for i, width in enumerate(self.hidden):
            s_start = self.s_offsets[i]
            lo, hi = self.enc.pre_lo[i], self.enc.pre_hi[i]
            for j in range(width):
                f = fixes[offset + j]
                T_row, t_val = self.T[i][j], self.t[i][j]
                e = np.zeros(self.n_vars)
                e[s_start + j] = 1.0
                if f > 0:
                    eq_rows.append(e - T_row)
                    eq_rhs.append(t_val)
                    in_rows.append(-T_row)
                    in_rhs.append(t_val)
                elif f < 0:
                    eq_rows.append(e)
                    eq_rhs.append(0.0)
                    in_rows.append(T_row)
                    in_rhs.append(-t_val)
                else:
                    alpha = hi[j] / (hi[j] - lo[j])
                    in_rows.append(-e)
                    in_rhs.append(0.0)
                    in_rows.append(T_row - e)
                    in_rhs.append(-t_val)
                    in_rows.append(e - alpha * T_row)
                    in_rhs.append(alpha * (t_val - lo[j]))
            offset += width
        # score >= kappa
        in_rows.append(-self.T[-1][0])
        in_rhs.append(self.t[-1][0] - self.kappa)

        A_in = np.vstack([self.base_in] + [np.atleast_2d(r) for r in in_rows])
        b_in = np.concatenate([self.base_in_rhs, np.asarray(in_rhs)])
        A_eq = np.vstack(eq_rows) if eq_rows else np.empty((0, self.n_vars))
        b_eq = np.asarray(eq_rhs)
        return A_eq, b_eq, A_in, b_in

    def solve(self, fixes: np.ndarray) -> QpResult:
        A_eq, b_eq, A_in, b_in = self.assemble(fixes)
        return polytope_qp_retry(self.d, self.n_vars, A_eq, b_eq, A_in, b_in)

    def complementarity(self, u: np.ndarray, fixes: np.ndarray) -> np.ndarray:
        """Per-hidden-neuron min(s, s - pre) violation; 0 for fixed neurons."""
        viol = np.zeros(self.H)
        offset = 0
        for i, width in enumerate(self.hidden):
            s_start = self.s_offsets[i]
            s = u[s_start:s_start + width]
            pre = self.T[i] @ u + self.t[i]
            free = fixes[offset:offset + width] == 0
            scale = np.maximum(1.0, self.enc.big_m[i])
            v = np.minimum(s, s - pre) / scale
            viol[offset:offset + width] = np.where(free, np.maximum(v, 0.0), 0.0)
            offset += width
        return viol


# ---------------------------------------------------------------------------
# branch and bound


@dataclass
class _Incumbent:
    value: float
    y: np.ndarray
    x: np.ndarray


def _flat_forced(enc: BigMEncoding) -> np.ndarray:
    status = enc.hidden_status()
    return np.concatenate(status).astype(np.int8) if status else np.zeros(0, np.int8)


def solve_min_rate(net: ReluNet, nature: GaussianNature, cuts: list[Cut],
                   kappa: float, enc: BigMEncoding | None = None,
                   tol: float = DEFAULT_GAP, box: Box | None = None,
                   ) -> MinRateResult | None:
    """Globally minimize the rate over {g >= kappa} minus the cut half-spaces.

    Returns None iff the feasible set is empty (within the search box).
    """
    if box is None:
        box = enc.box if enc is not None else default_box(nature)
    if enc is None:
        enc = propagate_bounds(net, box)
    if nature.dim != net.input_dim:
        raise ContractError("nature and net dimensions disagree")
    if enc.score_hi < kappa:
        return None

    extra_A, extra_b = _extra_rows(nature, cuts, box)

    def leaf_solve(pattern: np.ndarray) -> QpResult:
        A, b = leaf_rows(net, nature, pattern, kappa)
        return nearest_point_qp(np.vstack([A, extra_A]), np.concatenate([b, extra_b]))

    forced = _flat_forced(enc)
    nodes_expanded = 0

    if forced.size == 0 or (forced != 0).all():
        # no undecided binaries: single leaf
        res = leaf_solve(np.where(forced == 0, 1, forced))
        if res.status != "optimal":
            return None
        return _finish(net, nature, box, res.y, 0.0, 1)

    builder = _RelaxationBuilder(net, nature, enc, kappa, cuts, box)

    root = builder.solve(forced)
    if root.status != "optimal":
        return None

    incumbent: _Incumbent | None = None
    next_id = 1
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []

    def consider_candidate(u: np.ndarray) -> float | None:
        """Try the relaxation's x as a true-feasible incumbent; return its value."""
        nonlocal incumbent
        y = u[:nature.dim]
        x = nature.unwhiten(y)
        if net.forward(x) < kappa - 1e-8 or not box.contains(x, slack=1e-9):
            return None
        if any(not c.satisfied(x) for c in cuts):
            return None
        value = float(y @ y)
        if incumbent is None or value < incumbent.value:
            incumbent = _Incumbent(value, y.copy(), x)
        return value

    def leaf_update(fixes: np.ndarray):
        nonlocal incumbent
        res = leaf_solve(fixes)
        if res.status == "optimal" and (incumbent is None or res.value < incumbent.value):
            incumbent = _Incumbent(res.value, res.y.copy(), nature.unwhiten(res.y))

    def admit(fixes: np.ndarray, parent_lb: float):
        """Solve a node's relaxation and either close it or push it."""
        nonlocal next_id
        if (fixes != 0).all():
            leaf_update(fixes)
            return
        res = builder.solve(fixes)
        if res.status != "optimal":
            return
        lb = max(parent_lb, res.value)
        if incumbent is not None and lb >= incumbent.value - tol:
            return
        cand = consider_candidate(res.y)
        clean = builder.complementarity(res.y, fixes).max(initial=0.0) <= _CLEAN_TOL
        if clean and cand is not None and cand <= lb + 1e-9:
            return  # relaxation solution is ReLU-feasible: subtree resolved
        heapq.heappush(heap, (lb, next_id, fixes, res.y))
        next_id += 1

    cand = consider_candidate(root.y)
    root_clean = builder.complementarity(root.y, forced).max(initial=0.0) <= _CLEAN_TOL
    if root_clean and cand is not None and cand <= root.value + 1e-9:
        return _finish(net, nature, box, incumbent.y, 0.0, 1)
    heapq.heappush(heap, (root.value, 0, forced, root.y))

    gap = 0.0
    while heap:
        lb = heap[0][0]
        if incumbent is not None and lb >= incumbent.value - tol:
            gap = max(0.0, incumbent.value - lb)
            break
        _, _, fixes, u = heapq.heappop(heap)
        nodes_expanded += 1
        if nodes_expanded > _MAX_NODES:
            raise SolverError("branch-and-bound node budget exhausted")
        branch = _pick_branch(builder.complementarity(u, fixes), fixes, builder)
        for value in (1, -1):
            child = fixes.copy()
            child[branch] = value
            admit(child, lb)

    if incumbent is None:
        return None
    return _finish(net, nature, box, incumbent.y, gap, nodes_expanded + 1)


def _pick_branch(viol: np.ndarray, fixes: np.ndarray, builder: _RelaxationBuilder) -> int:
    free = fixes == 0
    if not free.any():
        raise SolverError("no free neuron to branch on")
    masked = np.where(free, viol, -np.inf)
    best = int(np.argmax(masked))
    if masked[best] > _CLEAN_TOL:
        return best
    # relaxation already complementarity-clean: branch where the envelope is widest
    widths = np.concatenate([hi - lo for lo, hi in
                             zip(builder.enc.pre_lo[:-1], builder.enc.pre_hi[:-1])])
    return int(np.argmax(np.where(free, widths, -np.inf)))


def _extra_rows(nature, cuts, box):
    bA, bb = box_rows(nature, box)
    cA, cb = cut_rows(nature, cuts)
    return np.vstack([bA, cA]), np.concatenate([bb, cb])


def _finish(net, nature, box, y, gap, nodes) -> MinRateResult:
    x = nature.unwhiten(y)
    return MinRateResult(
        x=x,
        rate=float(y @ y),
        pattern=net.activation_pattern(x),
        on_box_boundary=box.on_boundary(x),
        gap=gap,
        nodes_expanded=nodes,
    )


def find_dominating_set(net: ReluNet, nature: GaussianNature, kappa: float,
                        max_points: int = 100, tol: float = DEFAULT_GAP,
                        margin: float = DEFAULT_MARGIN, box: Box | None = None,
                        ) -> DominatingSet:
    """Sequentially extract dominating points, cutting away each one's region.

    Stops with status "exhausted" when the remaining region is empty, or
    "capped" after max_points (the paper's early-termination precedent).
    """
    if max_points < 1:
        raise ContractError("max_points must be >= 1")
    if box is None:
        box = default_box(nature)
    enc = propagate_bounds(net, box)

    points: list[np.ndarray] = []
    rates: list[float] = []
    flags: list[bool] = []
    cuts: list[Cut] = []
    status = "capped"
    for _ in range(max_points):
        res = solve_min_rate(net, nature, cuts, kappa, enc=enc, tol=tol, box=box)
        if res is None:
            status = "exhausted"
            break
        if net.forward(res.x) < kappa - 1e-8:
            raise SolverError("solver returned a point violating g >= kappa")
        for c in cuts:
            if not c.satisfied(res.x):
                raise SolverError("solver returned a point violating an earlier cut")
        if res.on_box_boundary:
            log.warning("dominating point touches the search box; consider a larger box")
        points.append(res.x)
        rates.append(res.rate)
        flags.append(res.on_box_boundary)
        cuts.append(Cut.from_point(nature, res.x, margin))

    pts = np.asarray(points) if points else np.empty((0, nature.dim))
    return DominatingSet(pts, rates, status, kappa, flags)
