"""The per-prior linear program and a small dense simplex solver for it.

For a prior ``b`` the program is

    minimise    sum_m F_m alpha_m
    subject to  sum_m alpha_m posterior_m[S(b)] = b[S(b)],  alpha >= 0,

over the posteriors whose support lies inside ``S(b) = supp(b)``, with
``F_m = beta * D(posterior_m || b) + V_hat(posterior_m)``.  The vertex
columns ``e_s`` (s in S(b)) are always admissible and form an identity basis
with ``alpha = b[S(b)] > 0``, so phase 1 is never needed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .belief import SUPPORT_TOL, admissible_mask, support

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 25


class LPStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration-limit"


class LPError(RuntimeError):
    def __init__(self, message: str, prior_index: int | None = None):
        super().__init__(message if prior_index is None else f"prior {prior_index}: {message}")
        self.prior_index = prior_index


@dataclass(frozen=True, eq=False)
class LPInstance:
    """One prior-belief backup.

    ``admissible`` holds posterior indices (the LP columns, ascending),
    ``A_eq`` their restriction to ``states`` (rows), ``rhs`` the prior on
    ``states``.  ``divergence`` is ``D(posterior_m || b)`` per column so the
    objective can be rebuilt cheaply when only ``V_hat`` changes.
    """

    prior_index: int
    states: np.ndarray
    admissible: np.ndarray
    A_eq: np.ndarray
    rhs: np.ndarray
    divergence: np.ndarray
    costs: np.ndarray
    vertex_columns: np.ndarray

    @property
    def num_rows(self) -> int:
        return self.A_eq.shape[0]

    def with_costs(self, costs: np.ndarray) -> LPInstance:
        return LPInstance(self.prior_index, self.states, self.admissible, self.A_eq, self.rhs,
                          self.divergence, np.asarray(costs, dtype=float), self.vertex_columns)

    def objective_for(self, v_hat: np.ndarray, beta: float) -> np.ndarray:
        return beta * self.divergence + v_hat[self.admissible]

    def to_dict(self) -> dict:
        return {
            "prior_index": int(self.prior_index),
            "states": self.states.tolist(),
            "admissible": self.admissible.tolist(),
            "A_eq": self.A_eq.tolist(),
            "rhs": self.rhs.tolist(),
            "divergence": self.divergence.tolist(),
            "costs": self.costs.tolist(),
        }


@dataclass(frozen=True, eq=False)
class LPSolution:
    alpha: np.ndarray
    objective: float
    status: LPStatus
    basis: np.ndarray | None = None
    pivots: int = 0

    def nonzero(self, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        idx = np.flatnonzero(self.alpha > tol)
        return idx, self.alpha[idx]


def admissible_posteriors(b, posteriors: np.ndarray, tol: float = SUPPORT_TOL) -> np.ndarray:
    return np.flatnonzero(admissible_mask(b, posteriors, tol))


def _divergences(cols: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """D(col || rhs) for every column of ``cols`` (restricted to supp(b))."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(cols > 0, cols * np.log(cols / rhs[:, None]), 0.0)
    return np.maximum(terms.sum(axis=0), 0.0)


def assemble_lp(b, posteriors: np.ndarray, v_hat, beta: float, prior_index: int = -1,
                tol: float = SUPPORT_TOL) -> LPInstance:
    b = np.asarray(b, dtype=float)
    states = support(b, tol)
    adm = admissible_posteriors(b, posteriors, tol)
    if adm.size == 0:
        raise LPError("no admissible posterior (posterior set lacks vertices?)", prior_index)
    A = np.ascontiguousarray(posteriors[np.ix_(adm, states)].T)
    rhs = b[states].copy()
    div = _divergences(A, rhs)
    # e_s columns: exactly one unit entry
    is_vertex = np.abs(A.max(axis=0) - 1.0) <= 1e-12
    vcols = np.full(states.size, -1, dtype=int)
    for j in np.flatnonzero(is_vertex):
        r = int(np.argmax(A[:, j]))
        if vcols[r] < 0:
            vcols[r] = j
    costs = beta * div + np.asarray(v_hat, dtype=float)[adm]
    return LPInstance(prior_index, states, adm, A, rhs, div, costs, vcols)


def _full_alpha(inst: LPInstance, basis: np.ndarray, x_b: np.ndarray, size: int) -> np.ndarray:
    alpha = np.zeros(size)
    alpha[inst.admissible[basis]] = np.maximum(x_b, 0.0)
    return alpha


class SingularBasis(LPError):
    pass


def _inverse(B: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        raise SingularBasis("basis matrix is singular") from None
    # entries of B lie in [0, 1], so a huge inverse means near-singularity
    if not np.all(np.isfinite(inv)) or np.abs(inv).max() > 1e10:
        raise SingularBasis("basis matrix is ill-conditioned")
    return inv


def simplex(A: np.ndarray, rhs: np.ndarray, costs: np.ndarray, basis: np.ndarray,
            rule: str = "bland", max_pivots: int = 10_000):
    """Primal simplex from a feasible ``basis`` (column positions).

    Bland's rule picks the lowest-index improving column and, among tied
    ratio-test rows, the basic variable with the lowest index; it cannot
    cycle.  ``rule="dantzig"`` takes the most negative reduced cost instead
    and falls back to Bland after a run of degenerate pivots.

    Returns ``(basis, x_basic, objective, pivots, status)``.
    """
    basis = np.array(basis, dtype=int)
    k = basis.size
    binv = _inverse(A[:, basis])
    scale = max(1.0, float(np.abs(costs).max()))
    dj_tol = 1e-12 * scale
    pivots = since_refactor = degenerate_run = 0
    while True:
        x_b = binv @ rhs
        y = costs[basis] @ binv
        d = costs - y @ A
        d[basis] = 0.0
        use_bland = rule == "bland" or degenerate_run > 2 * k
        if use_bland:
            cand = np.flatnonzero(d < -dj_tol)
            if cand.size == 0:
                break
            j = int(cand[0])
        else:
            j = int(np.argmin(d))
            if d[j] >= -dj_tol:
                break
        if pivots >= max_pivots:
            return basis, x_b, float(costs[basis] @ x_b), pivots, LPStatus.ITERATION_LIMIT
        u = binv @ A[:, j]
        rows = np.flatnonzero(u > PIVOT_TOL * max(1.0, float(np.abs(u).max())))
        if rows.size == 0:
            # columns are nonnegative with positive sums, so the LP is bounded
            raise LPError("unbounded direction in a bounded program")
        ratios = np.maximum(x_b[rows], 0.0) / u[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * max(1.0, best)]
        r = int(tied[np.argmin(basis[tied])])
        degenerate_run = degenerate_run + 1 if best <= 1e-14 else 0
        basis[r] = j
        pivots += 1
        since_refactor += 1
        if since_refactor >= REFACTOR_EVERY:
            binv = _inverse(A[:, basis])
            since_refactor = 0
        else:
            # eta update of the inverse
            piv = u[r]
            row_r = binv[r] / piv
            binv -= np.outer(u, row_r)
            binv[r] = row_r
    x_b = binv @ rhs
    return basis, x_b, float(costs[basis] @ x_b), pivots, LPStatus.OPTIMAL


def certificate_basis(inst: LPInstance) -> np.ndarray | None:
    """Vertex columns forming the identity basis, or None if one is missing."""
    if (inst.vertex_columns < 0).any():
        return None
    return inst.vertex_columns.copy()


def solve_lp(inst: LPInstance, num_posteriors: int | None = None, basis=None,
             rule: str = "bland", max_pivots: int = 10_000) -> LPSolution:
    """Solve ``inst``; start from ``basis`` if given, else the vertex certificate.

    ``alpha`` in the solution is indexed by posterior (length
    ``num_posteriors``, default ``max(admissible) + 1``).
    """
    size = int(num_posteriors if num_posteriors is not None else inst.admissible.max() + 1)
    start = certificate_basis(inst) if basis is None else np.asarray(basis, dtype=int)
    if start is None:
        return LPSolution(np.zeros(size), float("nan"), LPStatus.INFEASIBLE)
    try:
        basis, x_b, obj, pivots, status = simplex(inst.A_eq, inst.rhs, inst.costs, start, rule, max_pivots)
    except SingularBasis:
        if basis is None:
            raise
        return solve_lp(inst, size, None, "bland", max_pivots)
    return LPSolution(_full_alpha(inst, basis, x_b, size), obj, status, basis, pivots)


@dataclass(frozen=True)
class FeasibilityCertificate:
    feasible: bool
    alpha: np.ndarray
    residual: float
    message: str = ""

    def __bool__(self) -> bool:
        return self.feasible


def verify_feasibility(b, posteriors: np.ndarray, tol: float = 1e-12) -> FeasibilityCertificate:
    """Explicit feasible point: put ``b(s)`` on the vertex posterior ``e_s``."""
    b = np.asarray(b, dtype=float)
    posteriors = np.asarray(posteriors, dtype=float)
    alpha = np.zeros(posteriors.shape[0])
    for s in support(b):
        hits = np.flatnonzero(np.abs(posteriors[:, s] - 1.0) <= tol)
        if hits.size == 0:
            return FeasibilityCertificate(False, alpha, float("inf"), f"no vertex posterior for state {s}")
        alpha[hits[0]] = b[s]
    states = support(b)
    residual = float(np.abs(alpha @ posteriors[:, states] - b[states]).max()) if states.size else 0.0
    residual = max(residual, abs(alpha.sum() - 1.0))
    ok = residual < max(tol, 1e-12) and (alpha >= 0).all()
    return FeasibilityCertificate(bool(ok), alpha, residual, "" if ok else "residual too large")
