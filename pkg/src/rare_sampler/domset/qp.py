"""Convex QP solvers used by the dominating-point search.

Two routes on purpose:

* `nearest_point_qp` is a hand-written dual active-set iteration for
  min ||y||^2 s.t. Ay <= b, the whitened form of minimizing the Gaussian
  rate over a polytope. Starting from the unconstrained minimum y = 0 it
  adds the most violated constraint, stepping in primal and dual space and
  dropping blocking constraints, so no feasible start is needed and
  infeasibility is detected when the dual step is unbounded. Direct linear
  solves give stationarity residuals near machine precision.

* `polytope_qp_clarabel` hands general convex QPs (possibly with a singular
  Hessian block, as in the node relaxations) to clarabel's interior-point
  method, which certifies infeasibility.

Branch-and-bound leaves use the active-set route; node relaxations and the
enumeration oracle use clarabel, so correctness tests never depend on a
single QP backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import SolverError

try:
    import clarabel
except ImportError as exc:  # pragma: no cover - hard dependency
    raise ImportError("rare-sampler requires the clarabel solver") from exc

_FEAS_TOL = 1e-10
_DEP_TOL = 1e-12


@dataclass
class QpResult:
    status: str  # "optimal" | "infeasible"
    y: np.ndarray | None
    value: float | None
    iterations: int = 0


def nearest_point_qp(A: np.ndarray, b: np.ndarray,
                     max_iter: int | None = None) -> QpResult:
    """min ||y||^2 s.t. A y <= b via dual active-set iteration.

    Rows are normalized internally so feasibility tolerances are absolute
    distances. Deterministic: most-violated constraint first, ties by lowest
    row index.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    m, d = A.shape
    if b.size != m:
        raise ValueError("A and b disagree on the number of constraints")
    if m == 0:
        return QpResult("optimal", np.zeros(d), 0.0)

    norms = np.linalg.norm(A, axis=1)
    zero_rows = norms <= 1e-300
    if zero_rows.any() and (b[zero_rows] < -_FEAS_TOL).any():
        return QpResult("infeasible", None, None)
    keep = ~zero_rows
    A = A[keep] / norms[keep, None]
    b = b[keep] / norms[keep]
    m = A.shape[0]
    if m == 0:
        return QpResult("optimal", np.zeros(d), 0.0)

    if max_iter is None:
        max_iter = 50 * (m + d) + 100

    y = np.zeros(d)
    act: list[int] = []
    u = np.zeros(0)

    for it in range(max_iter):
        viol = A @ y - b
        p = int(np.argmax(viol))
        if viol[p] <= _FEAS_TOL:
            return QpResult("optimal", y, float(y @ y), it)

        a_p = A[p]
        t_accum = 0.0
        while True:
            if act:
                N = A[act]
                try:
                    r = np.linalg.solve(N @ N.T, N @ a_p)
                except np.linalg.LinAlgError:
                    r = np.linalg.lstsq(N @ N.T, N @ a_p, rcond=None)[0]
                z = 0.5 * (a_p - N.T @ r)
            else:
                r = np.zeros(0)
                z = 0.5 * a_p

            denom = float(a_p @ z)
            v = float(a_p @ y - b[p])
            t_full = v / denom if denom > _DEP_TOL else np.inf

            t_block = np.inf
            drop = -1
            for k, rk in enumerate(r):
                if rk > _DEP_TOL:
                    cand = u[k] / rk
                    if cand < t_block - 1e-15:
                        t_block, drop = cand, k

            t = min(t_full, t_block)
            if not np.isfinite(t):
                return QpResult("infeasible", None, None, it)

            if t > 0.0:
                y = y - t * z
                if act:
                    u = u - t * r
                t_accum += t

            if t_full <= t_block:
                act.append(p)
                u = np.append(u, t_accum)
                break
            del act[drop]
            u = np.delete(u, drop)

    raise SolverError("active-set QP did not converge")


def stationarity_residual(A: np.ndarray, b: np.ndarray, y: np.ndarray,
                          active_tol: float = 1e-8) -> float:
    """KKT residual min_{lam>=0} ||2y + N_act' lam|| at a claimed optimum."""
    from scipy.optimize import nnls

    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    norms = np.linalg.norm(A, axis=1)
    ok = norms > 0
    An, bn = A[ok] / norms[ok, None], b[ok] / norms[ok]
    grad = 2.0 * np.asarray(y, dtype=float)
    active = np.abs(An @ y - bn) <= active_tol
    if not active.any():
        return float(np.linalg.norm(grad))
    _, res = nnls(An[active].T, -grad)
    return float(res)


_STATUS_OPTIMAL = ("Solved", "AlmostSolved")
_STATUS_INFEASIBLE = ("PrimalInfeasible", "AlmostPrimalInfeasible")


def polytope_qp_clarabel(quad_dim: int, n_vars: int,
                         A_eq: np.ndarray, b_eq: np.ndarray,
                         A_in: np.ndarray, b_in: np.ndarray,
                         tol: float = 1e-11) -> QpResult:
    """min ||u[:quad_dim]||^2 s.t. A_eq u = b_eq, A_in u <= b_in."""
    diag = np.zeros(n_vars)
    diag[:quad_dim] = 2.0
    P = sp.diags(diag, format="csc")
    q = np.zeros(n_vars)

    rows = []
    rhs = []
    cones = []
    if len(b_eq):
        rows.append(np.atleast_2d(A_eq))
        rhs.append(b_eq)
        cones.append(clarabel.ZeroConeT(len(b_eq)))
    if len(b_in):
        rows.append(np.atleast_2d(A_in))
        rhs.append(b_in)
        cones.append(clarabel.NonnegativeConeT(len(b_in)))
    if not rows:
        return QpResult("optimal", np.zeros(n_vars), 0.0)

    A = sp.csc_matrix(np.vstack(rows))
    b = np.concatenate(rhs)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol

    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status in _STATUS_OPTIMAL:
        u = np.asarray(sol.x, dtype=float)
        value = float(u[:quad_dim] @ u[:quad_dim])
        return QpResult("optimal", u, value, int(sol.iterations))
    if status in _STATUS_INFEASIBLE:
        return QpResult("infeasible", None, None, int(sol.iterations))
    raise SolverError(f"clarabel returned status {status}")


def polytope_qp_retry(quad_dim: int, n_vars: int, A_eq, b_eq, A_in, b_in,
                      tols: tuple[float, ...] = (1e-10, 1e-8)) -> QpResult:
    """Clarabel with a tolerance ladder; 'failed' status if every try stalls.

    A 'failed' result still means the problem was not proven infeasible, so
    callers may substitute any valid fallback bound.
    """
    err: Exception | None = None
    for tol in tols:
        try:
            return polytope_qp_clarabel(quad_dim, n_vars, A_eq, b_eq, A_in, b_in, tol)
        except SolverError as exc:
            err = exc
    from scipy.optimize import linprog

    lp = linprog(np.zeros(n_vars),
                 A_ub=np.atleast_2d(A_in) if len(b_in) else None,
                 b_ub=b_in if len(b_in) else None,
                 A_eq=np.atleast_2d(A_eq) if len(b_eq) else None,
                 b_eq=b_eq if len(b_eq) else None,
                 bounds=[(None, None)] * n_vars, method="highs")
    if lp.status == 2:
        return QpResult("infeasible", None, None)
    if lp.status == 0:
        return QpResult("failed", None, None)
    raise SolverError(f"relaxation unsolvable: {err}; HiGHS status {lp.status}")
