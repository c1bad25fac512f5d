"""Executable checks of the solver's theoretical guarantees and gap bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .belief import (
    BeliefSets,
    build_prior_set,
    build_simplex_grid,
    dedup_rows,
    entropy,
    estimate_density,
    support,
)
from .model import PerceptionMDP
from .solver import SolveResult, value_iteration

BOUND_CAVEAT = (
    "delta_hat is a proxy computed from the finite solution (largest value gap "
    "between priors within eps_hat*|S| in max-norm), not from the unknown "
    "continuous value function; eps_hat is a sampled lower bound on the true "
    "density supremum. The resulting epsilon is indicative, not a certified bound."
)


def mdp_oracle_values(model: PerceptionMDP, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal values of the fully observed MDP by plain value iteration."""
    v = np.zeros(model.num_states)
    c = model.cost.T  # (A, S)
    for _ in range(max_iter):
        q = c + model.gamma * model.transition @ v
        v_new = q.min(axis=0)
        if np.abs(v_new - v).max() <= tol * (1 - model.gamma):
            return v_new
        v = v_new
    return v


@dataclass
class CheckReport:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.name, "passed": self.passed, **self.details}


def entropy_gap_bound(eps: float, num_states: int) -> float:
    """``eps * |log eps| * |S|`` (zero at eps = 0)."""
    return 0.0 if eps <= 0 else eps * abs(math.log(eps)) * num_states


def check_entropy_perturbation(num_states: int, trials: int = 1000, seed: int = 0,
                               slack: float = 1e-12) -> CheckReport:
    """Sample distribution pairs within max-norm 1/2 and test the entropy bound.

    Pairs come from a mix of interior Dirichlet draws, sparse draws and small
    perturbations; a pair further apart than 1/2 is pulled toward its first
    member until it fits.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.Generator(np.random.Philox(seed))
    n = num_states
    failures = []
    worst = 0.0
    for i in range(trials):
        kind = i % 3
        p = rng.dirichlet(np.full(n, 0.3 if kind == 1 else 1.0))
        if kind == 2:
            q = p + rng.normal(scale=rng.choice([1e-6, 1e-3, 1e-1]), size=n)
            q = np.abs(q)
            q /= q.sum()
        else:
            q = rng.dirichlet(np.full(n, 0.3 if kind == 1 else 1.0))
        eps = float(np.abs(p - q).max())
        if eps > 0.5:
            q = p + (q - p) * (0.5 / eps) * rng.uniform(0.2, 1.0)
            eps = float(np.abs(p - q).max())
        lhs = abs(entropy(p) - entropy(q))
        rhs = entropy_gap_bound(eps, n)
        if rhs > 0:
            worst = max(worst, lhs / rhs)
        if lhs > rhs + slack:
            failures.append({"p": p.tolist(), "q": q.tolist(), "lhs": lhs, "rhs": rhs})
    return CheckReport("entropy-bound", not failures,
                       {"num_states": n, "trials": trials, "failures": failures, "max_ratio": worst})


def _match_rows(reference: np.ndarray, rows: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Position in ``rows`` of each reference row (-1 if absent)."""
    both = np.vstack([rows, reference])
    kept, rep = dedup_rows(both, tol)
    first = {int(k): int(pos) for pos, k in enumerate(kept)}
    out = np.full(reference.shape[0], -1, dtype=int)
    for i in range(reference.shape[0]):
        j = kept[rep[rows.shape[0] + i]]
        if j < rows.shape[0]:
            out[i] = j
    return out


def refinement_monotonicity(model: PerceptionMDP, spacings, tol: float = 1e-11,
                            slack: float = 1e-8) -> CheckReport:
    """Solve on nested simplex grids and check values never increase under refinement.

    Each coarse grid must embed in the next finer one (spacing ``1/k`` with
    each ``k`` dividing the next).  The report carries a value table with one
    row per (spacing, kind, index).
    """
    spacings = [float(s) for s in spacings]
    ks = [round(1 / s) for s in spacings]
    for a, b in zip(ks, ks[1:]):
        if b % a:
            raise ValueError(f"spacings 1/{a} and 1/{b} are not nested")
    results = []
    for sp in spacings:
        sets = build_prior_set(build_simplex_grid(model.num_states, sp), model)
        results.append((sp, sets, value_iteration(model, sets, tol=tol)))
    table = []
    for sp, sets, res in results:
        for kind, beliefs, values in (("posterior", sets.posteriors, res.V_hat), ("prior", sets.priors, res.V)):
            for i, (b, v) in enumerate(zip(beliefs, values)):
                table.append({"spacing": sp, "kind": kind, "index": i,
                              "belief": b.tolist(), "value": float(v)})
    worst = 0.0
    steps = []
    for (sp0, s0, r0), (sp1, s1, r1) in zip(results, results[1:]):
        mp = _match_rows(s0.posteriors, s1.posteriors)
        mb = _match_rows(s0.priors, s1.priors)
        if (mp < 0).any() or (mb < 0).any():
            raise ValueError(f"grid {sp0} does not embed in grid {sp1}")
        d_post = float((r1.V_hat[mp] - r0.V_hat).max())
        d_prior = float((r1.V[mb] - r0.V).max())
        worst = max(worst, d_post, d_prior)
        steps.append({"from": sp0, "to": sp1, "max_increase_posterior": d_post,
                      "max_increase_prior": d_prior, "shared_posteriors": int(mp.size),
                      "shared_priors": int(mb.size)})
    summary = [{"spacing": sp, "num_posteriors": s.num_posteriors, "num_priors": s.num_priors,
                "mean_prior_value": float(r.V.mean()), "max_prior_value": float(r.V.max()),
                "iterations": r.iterations, "converged": r.converged}
               for sp, s, r in results]
    passed = worst <= slack and all(r.converged for _, _, r in results)
    return CheckReport("monotonicity", passed,
                       {"max_increase": worst, "steps": steps, "summary": summary, "table": table})


def beta_zero_oracle(model: PerceptionMDP, spacing: float = 0.2, tol: float = 1e-11,
                     atol: float = 1e-6) -> CheckReport:
    """With free information, vertex posteriors must carry the fully observed MDP values."""
    m0 = model.with_params(beta=0.0)
    sets = build_prior_set(build_simplex_grid(m0.num_states, spacing), m0)
    res = value_iteration(m0, sets, tol=tol)
    oracle = mdp_oracle_values(m0)
    got = res.V_hat[sets.vertex_index]
    gap = float(np.abs(got - oracle).max())
    return CheckReport("beta-zero-oracle", gap <= atol and res.converged,
                       {"vertex_values": got.tolist(), "mdp_values": oracle.tolist(),
                        "max_gap": gap, "tolerance": atol})


@dataclass(frozen=True)
class BoundReport:
    eps_hat: float
    delta_hat: float
    log_support_term: float
    epsilon: float
    limsup_bound: float
    gamma: float
    num_samples: int
    caveats: str = BOUND_CAVEAT

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def regularity_proxy(sets: BeliefSets, V: np.ndarray, radius: float) -> float:
    """Largest ``|V(b) - V(b')|`` over prior pairs within ``radius`` in max-norm."""
    from scipy.spatial import cKDTree

    if sets.num_priors < 2:
        return 0.0
    pairs = cKDTree(sets.priors).query_pairs(radius + 1e-15, p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return 0.0
    return float(np.abs(V[pairs[:, 0]] - V[pairs[:, 1]]).max())


def approximation_bound(model: PerceptionMDP, sets: BeliefSets, result: SolveResult,
                        num_samples: int = 2000, seed: int = 0) -> BoundReport:
    """Evaluate the approximation-gap bound with sampled and proxied constants.

    epsilon = gamma*delta + eps*beta*|log eps|*|S|
              + eps*(beta * max_b sum_{s in supp b} |log b(s)| + sum_{s,a} |C(s,a)|)
    """
    eps = estimate_density(sets.posteriors, num_samples, seed)
    delta = regularity_proxy(sets, result.V, eps * model.num_states)
    log_term = max(float(np.abs(np.log(b[support(b)])).sum()) for b in sets.priors)
    epsilon = (model.gamma * delta
               + model.beta * entropy_gap_bound(eps, model.num_states)
               + eps * (model.beta * log_term + float(np.abs(model.cost).sum())))
    caveat = BOUND_CAVEAT
    if eps > 0.5:
        caveat += " eps_hat exceeds 1/2, outside the range where the entropy perturbation step holds."
    return BoundReport(eps, delta, log_term, epsilon, epsilon / (1.0 - model.gamma),
                       model.gamma, num_samples, caveat)
