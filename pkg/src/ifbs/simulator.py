"""Closed-loop Monte-Carlo rollouts of a perception-action policy.

The true state drives the sensor; the agent's bookkeeping only ever moves
between indices of the prior and posterior sets, so a rollout can never
leave the belief set.  Every trial draws from its own Philox substream keyed
by ``(seed, trial)``, which makes trials independent of execution order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .belief import SUPPORT_TOL, kl_divergence
from .model import PerceptionMDP
from .policy import PerceptionActionPolicy


class SimulationError(RuntimeError):
    pass


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial,))))


@dataclass(frozen=True, eq=False)
class RolloutTrace:
    """Per-step arrays; ``states`` has ``horizon + 1`` entries (the last is the final state)."""

    states: np.ndarray
    priors: np.ndarray
    observations: np.ndarray
    posteriors: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    information: np.ndarray
    seed: int
    horizon: int

    def discounted(self, gamma: float, beta: float = 0.0) -> tuple[float, float]:
        """Discounted environmental cost and discounted information (nats)."""
        w = gamma ** np.arange(self.horizon)
        return float(w @ self.costs), float(w @ self.information)

    def records(self):
        for t in range(self.horizon):
            yield {
                "t": t,
                "state": int(self.states[t]),
                "prior": int(self.priors[t]),
                "observation": int(self.observations[t]),
                "posterior": int(self.posteriors[t]),
                "action": int(self.actions[t]),
                "cost": float(self.costs[t]),
                "information": float(self.information[t]),
            }


def prior_information(policy: PerceptionActionPolicy) -> np.ndarray:
    """Expected information acquired at each prior, in nats."""
    sets = policy.sets
    out = np.empty(sets.num_priors)
    for p in range(sets.num_priors):
        b = sets.priors[p]
        out[p] = sum(a * kl_divergence(sets.posteriors[m], b)
                     for m, a in zip(policy.alpha_index[p], policy.alpha_value[p]))
    return out


def rollout(model: PerceptionMDP, policy: PerceptionActionPolicy, prior: int, state: int,
            horizon: int, seed: int = 0, trial: int = 0, info: np.ndarray | None = None,
            rng: np.random.Generator | None = None) -> RolloutTrace:
    """Simulate ``horizon`` perceive-act steps from ``(prior, state)``."""
    sets = policy.sets
    if sets.priors[prior, state] <= SUPPORT_TOL:
        raise SimulationError(f"state {state} is outside the support of prior {prior}")
    if info is None:
        info = prior_information(policy)
    if rng is None:
        rng = trial_rng(seed, trial)
    states = np.empty(horizon + 1, dtype=int)
    priors = np.empty(horizon, dtype=int)
    posts = np.empty(horizon, dtype=int)
    acts = np.empty(horizon, dtype=int)
    costs = np.empty(horizon)
    infos = np.empty(horizon)
    s, p = state, prior
    for t in range(horizon):
        idx, probs = policy.observation_row(p, s)
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise SimulationError(f"kernel row for state {s} at prior {p} sums to {total}")
        m = int(idx[min(np.searchsorted(np.cumsum(probs), rng.random() * total, side="right"), idx.size - 1)])
        a = int(policy.actions[m])
        states[t], priors[t], posts[t], acts[t] = s, p, m, a
        costs[t] = model.cost[s, a]
        infos[t] = info[p]
        row = model.transition[a, s]
        s = int(min(np.searchsorted(np.cumsum(row), rng.random() * row.sum(), side="right"), row.size - 1))
        p = int(sets.prior_index[m, a])
    states[horizon] = s
    return RolloutTrace(states, priors, posts.copy(), posts, acts, costs, infos, seed, horizon)


@dataclass(frozen=True)
class ResidenceHistogram:
    """``fractions[t, s]``: share of trials in state ``s`` at time ``t`` (t = 0 is the start)."""

    fractions: np.ndarray
    trials: int

    def rows(self, slices=None):
        times = range(self.fractions.shape[0]) if slices is None else [t for t in slices if t < self.fractions.shape[0]]
        for t in times:
            for s in range(self.fractions.shape[1]):
                yield t, s, float(self.fractions[t, s])


@dataclass(frozen=True)
class CostSummary:
    trials: int
    horizon: int
    mean_cost: float
    se_cost: float
    mean_information: float
    se_information: float
    mean_total: float
    se_total: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sample_state(rng, b):
    return int(min(np.searchsorted(np.cumsum(b), rng.random() * b.sum(), side="right"), b.size - 1))


def _run_trials(args):
    model, policy, prior, state, horizon, seed, lo, hi, info = args
    counts = np.zeros((horizon + 1, model.num_states))
    cost = np.empty(hi - lo)
    nats = np.empty(hi - lo)
    w = model.gamma ** np.arange(horizon)
    for i, trial in enumerate(range(lo, hi)):
        rng = trial_rng(seed, trial)
        s0 = state if state is not None else sample_state(rng, policy.sets.priors[prior])
        tr = rollout(model, policy, prior, s0, horizon, seed, trial, info, rng)
        counts[np.arange(horizon + 1), tr.states] += 1
        cost[i] = w @ tr.costs
        nats[i] = w @ tr.information
    return counts, cost, nats


def batch_rollouts(model: PerceptionMDP, policy: PerceptionActionPolicy, prior: int, horizon: int,
                   trials: int, seed: int = 0, state: int | None = None,
                   jobs: int = 1) -> tuple[ResidenceHistogram, CostSummary]:
    """Run ``trials`` independent rollouts and aggregate residences and costs.

    The initial true state is drawn from the prior unless ``state`` is given.
    Costs are discounted sums over the horizon: environmental cost,
    information in nats, and the weighted total ``cost + beta * information``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    info = prior_information(policy)
    jobs = max(1, min(int(jobs), trials))
    step = -(-trials // jobs)
    tasks = [(model, policy, prior, state, horizon, seed, lo, min(lo + step, trials), info)
             for lo in range(0, trials, step)]
    if jobs == 1:
        parts = [_run_trials(t) for t in tasks]
    else:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_run_trials, tasks))
    # reduction in fixed trial order
    counts = sum(p[0] for p in parts)
    cost = np.concatenate([p[1] for p in parts])
    nats = np.concatenate([p[2] for p in parts])
    total = cost + model.beta * nats

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")

    summary = CostSummary(trials, horizon, float(cost.mean()), se(cost), float(nats.mean()), se(nats),
                          float(total.mean()), se(total))
    return ResidenceHistogram(counts / trials, trials), summary


@dataclass(frozen=True)
class PlanComparison:
    prior: int
    planned: float
    empirical: float
    standard_error: float
    tail_bound: float
    trials: int
    horizon: int

    @property
    def gap(self) -> float:
        return abs(self.planned - self.empirical)

    def agrees(self, num_se: float = 4.0) -> bool:
        return self.gap <= num_se * self.standard_error + self.tail_bound

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(gap=self.gap, agrees_4se=self.agrees())
        return d


def empirical_vs_planned(prior: int, result, trials: int = 10_000, horizon: int | None = None,
                         seed: int = 0, jobs: int = 1) -> PlanComparison:
    """Compare the planned value of ``prior`` with the simulated discounted total.

    The horizon defaults to the smallest T with ``gamma**T * max|V| <= 1e-6``;
    the truncated tail is bounded by ``gamma**T * max|V|``.
    """
    model = result.model
    vmax = float(np.abs(result.V).max()) if result.V.size else 0.0
    if horizon is None:
        horizon = 0 if vmax == 0 or model.gamma == 0 else max(1, math.ceil(math.log(1e-6 / vmax) / math.log(model.gamma)))
    policy = PerceptionActionPolicy.from_result(result)
    _, summary = batch_rollouts(model, policy, prior, horizon, trials, seed, jobs=jobs)
    tail = model.gamma ** horizon * vmax
    return PlanComparison(prior, float(result.V[prior]), summary.mean_total,
                          0.0 if trials == 1 else summary.se_total, tail, trials, horizon)
