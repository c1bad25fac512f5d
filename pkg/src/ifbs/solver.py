"""Value iteration over an invariant finite belief set.

One sweep applies the restricted Bellman operator once: every posterior is
backed up against the previous prior values, then every prior solves its
linear program against the fresh posterior values.
"""

from __future__ import annotations

import logging
import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np

from .belief import BeliefSets
from .lp import (
    LPError,
    LPInstance,
    LPSolution,
    LPStatus,
    SingularBasis,
    assemble_lp,
    certificate_basis,
    simplex,
    solve_lp,
)
from .model import PerceptionMDP

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000


@dataclass(eq=False)
class SolveResult:
    model: PerceptionMDP
    sets: BeliefSets
    V: np.ndarray
    V_hat: np.ndarray
    best_action: np.ndarray
    alpha_index: list[np.ndarray]
    alpha_value: list[np.ndarray]
    residuals: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    tol: float = DEFAULT_TOL

    @property
    def error_bound(self) -> float:
        """A-posteriori bound on the sup-distance from ``V`` to the fixed point."""
        if not self.residuals:
            return float("inf")
        g = self.model.gamma
        return self.residuals[-1] * g / (1.0 - g)

    def alpha(self, prior: int) -> np.ndarray:
        """Dense alpha vector over posteriors for one prior."""
        out = np.zeros(self.sets.num_posteriors)
        out[self.alpha_index[prior]] = self.alpha_value[prior]
        return out

    def contraction_violations(self, slack: float = 1e-9) -> list[int]:
        """Sweeps k where residual[k+1] > gamma * residual[k] + slack."""
        r, g = self.residuals, self.model.gamma
        return [k for k in range(len(r) - 1) if r[k + 1] > g * r[k] + slack]


def bellman_residual(v_prev, v_next) -> float:
    v_prev = np.asarray(v_prev, dtype=float)
    v_next = np.asarray(v_next, dtype=float)
    if v_prev.shape != v_next.shape:
        raise ValueError(f"length mismatch: {v_prev.shape} vs {v_next.shape}")
    if v_prev.size == 0:
        return 0.0
    return float(np.abs(v_next - v_prev).max())


def _stage_costs(model: PerceptionMDP, sets: BeliefSets) -> np.ndarray:
    return sets.posteriors @ model.cost


def posterior_backups(V, model: PerceptionMDP, sets: BeliefSets, stage_costs=None):
    """All posterior backups at once; returns ``(values, actions)``."""
    if stage_costs is None:
        stage_costs = _stage_costs(model, sets)
    q = stage_costs + model.gamma * np.asarray(V)[sets.prior_index]
    actions = np.argmin(q, axis=1)
    return q[np.arange(q.shape[0]), actions], actions


def posterior_backup(m: int, V, model: PerceptionMDP, sets: BeliefSets) -> tuple[float, int]:
    q = sets.posteriors[m] @ model.cost + model.gamma * np.asarray(V)[sets.prior_index[m]]
    a = int(np.argmin(q))
    return float(q[a]), a


def build_instances(model: PerceptionMDP, sets: BeliefSets) -> list[LPInstance]:
    zero = np.zeros(sets.num_posteriors)
    return [assemble_lp(b, sets.posteriors, zero, model.beta, prior_index=p) for p, b in enumerate(sets.priors)]


def prior_backup(p: int, V_hat, model: PerceptionMDP, sets: BeliefSets,
                 instance: LPInstance | None = None, basis=None) -> tuple[float, LPSolution]:
    inst = instance if instance is not None else assemble_lp(sets.priors[p], sets.posteriors, V_hat, model.beta, p)
    if instance is not None:
        inst = inst.with_costs(inst.objective_for(np.asarray(V_hat), model.beta))
    sol = solve_lp(inst, sets.num_posteriors, basis=basis)
    if sol.status is not LPStatus.OPTIMAL:
        raise LPError(f"LP ended with status {sol.status.value}", p)
    return sol.objective, sol


def _solve_chunk(instances, beta, v_hat, bases, rule):
    values = np.empty(len(instances))
    out_bases, out_x = [], []
    for i, inst in enumerate(instances):
        costs = beta * inst.divergence + v_hat[inst.admissible]
        start = bases[i] if bases[i] is not None else certificate_basis(inst)
        if start is None:
            raise LPError("vertex certificate unavailable (missing vertex posterior)", inst.prior_index)
        try:
            basis, x_b, obj, _, status = simplex(inst.A_eq, inst.rhs, costs, start, rule)
        except SingularBasis:
            # numerical trouble on a warm path: restart from the identity basis
            basis, x_b, obj, _, status = simplex(inst.A_eq, inst.rhs, costs, certificate_basis(inst), "bland")
        if status is not LPStatus.OPTIMAL:
            raise LPError(f"LP ended with status {status.value}", inst.prior_index)
        values[i] = obj
        out_bases.append(basis)
        out_x.append(x_b)
    return values, out_bases, out_x


_WORKER_INSTANCES: list[LPInstance] = []


def _worker_init(instances):
    global _WORKER_INSTANCES
    _WORKER_INSTANCES = instances


def _worker_solve(args):
    lo, hi, beta, v_hat, bases, rule = args
    return _solve_chunk(_WORKER_INSTANCES[lo:hi], beta, v_hat, bases, rule)


class _PriorBackups:
    """Prior-phase executor; keeps each prior's last optimal basis as a warm start."""

    def __init__(self, instances, beta, jobs, rule):
        self.instances = instances
        self.beta = beta
        self.rule = rule
        self.bases: list = [None] * len(instances)
        self.x: list = [None] * len(instances)
        self.pool = None
        jobs = max(1, int(jobs))
        if jobs > 1 and len(instances) > 1:
            n = len(instances)
            step = -(-n // jobs)
            self.chunks = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
            ctx = multiprocessing.get_context("fork" if "fork" in multiprocessing.get_all_start_methods() else None)
            self.pool = ctx.Pool(len(self.chunks), initializer=_worker_init, initargs=(instances,))

    def __call__(self, v_hat):
        if self.pool is None:
            values, bases, xs = _solve_chunk(self.instances, self.beta, v_hat, self.bases, self.rule)
            self.bases, self.x = bases, xs
            return values
        jobs = [(lo, hi, self.beta, v_hat, self.bases[lo:hi], self.rule) for lo, hi in self.chunks]
        parts = self.pool.map(_worker_solve, jobs)
        # fixed chunk order keeps the assembly deterministic
        self.bases = [b for _, bs, _ in parts for b in bs]
        self.x = [x for _, _, xs in parts for x in xs]
        return np.concatenate([v for v, _, _ in parts])

    def alphas(self):
        idx, val = [], []
        for inst, basis, x in zip(self.instances, self.bases, self.x):
            keep = x > 0
            order = np.argsort(inst.admissible[basis[keep]])
            idx.append(inst.admissible[basis[keep]][order])
            val.append(x[keep][order])
        return idx, val

    def close(self):
        if self.pool is not None:
            self.pool.close()
            self.pool.join()
            self.pool = None


def value_iteration(model: PerceptionMDP, sets: BeliefSets, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER, init=None, jobs: int = 1,
                    rule: str = "bland", instances: list[LPInstance] | None = None,
                    progress=None) -> SolveResult:
    """Iterate the restricted Bellman operator until the prior values settle.

    Stops when ``max|V_k+1 - V_k| <= tol`` or after ``max_iter`` sweeps.
    ``init`` is an optional starting vector over priors (default zeros).
    ``jobs`` > 1 spreads the prior LPs over worker processes.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if instances is None:
        instances = build_instances(model, sets)
    V = np.zeros(sets.num_priors) if init is None else np.array(init, dtype=float)
    if V.shape != (sets.num_priors,):
        raise ValueError(f"init must have length {sets.num_priors}")
    stage_costs = _stage_costs(model, sets)
    backups = _PriorBackups(instances, model.beta, jobs if jobs else os.cpu_count(), rule)
    residuals: list[float] = []
    converged = False
    try:
        for it in range(1, max_iter + 1):
            v_hat, _ = posterior_backups(V, model, sets, stage_costs)
            V_next = backups(v_hat)
            res = bellman_residual(V, V_next)
            residuals.append(res)
            V = V_next
            if progress is not None:
                progress(it, res)
            if res <= tol:
                converged = True
                break
        idx, val = backups.alphas()
    finally:
        backups.close()
    v_hat, actions = posterior_backups(V, model, sets, stage_costs)
    log.info("value iteration: %d sweeps, residual %.3g, converged=%s", len(residuals), residuals[-1], converged)
    return SolveResult(model, sets, V, v_hat, actions, idx, val, residuals, len(residuals), converged, tol)
