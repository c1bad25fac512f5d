"""Executable perception kernels and action maps from a solved belief set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief import SUPPORT_TOL, BeliefSets, kl_divergence

SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PerceptionActionPolicy:
    """Sparse alpha per prior plus a deterministic action per posterior.

    Kernels are expanded on demand by :meth:`kernel`.
    """

    sets: BeliefSets
    alpha_index: list
    alpha_value: list
    actions: np.ndarray

    @classmethod
    def from_result(cls, result) -> PerceptionActionPolicy:
        return cls(result.sets, result.alpha_index, result.alpha_value, np.asarray(result.best_action))

    def alpha(self, prior: int) -> np.ndarray:
        out = np.zeros(self.sets.num_posteriors)
        out[self.alpha_index[prior]] = self.alpha_value[prior]
        return out

    def kernel(self, prior: int) -> np.ndarray:
        return reconstruct_kernel(prior, self.alpha(prior), self.sets)

    def observation_row(self, prior: int, state: int) -> tuple[np.ndarray, np.ndarray]:
        """Observation indices and probabilities for ``state`` at ``prior``."""
        b = self.sets.priors[prior]
        idx = self.alpha_index[prior]
        if b[state] <= SUPPORT_TOL:
            return np.array([self.sets.vertex_index[state]]), np.ones(1)
        probs = self.alpha_value[prior] * self.sets.posteriors[idx, state] / b[state]
        keep = probs > 0
        return idx[keep], probs[keep]

    def to_dict(self, dense_kernels: bool = False) -> dict:
        out = {
            "num_priors": self.sets.num_priors,
            "num_posteriors": self.sets.num_posteriors,
            "alpha": [
                {"prior": p, "posterior": i.tolist(), "alpha": v.tolist()}
                for p, (i, v) in enumerate(zip(self.alpha_index, self.alpha_value))
            ],
            "actions": self.actions.tolist(),
        }
        if dense_kernels:
            out["kernels"] = [self.kernel(p).tolist() for p in range(self.sets.num_priors)]
        return out


def action_of(posterior: int, policy: PerceptionActionPolicy) -> int:
    return int(policy.actions[posterior])


def reconstruct_kernel(prior: int, alpha, sets: BeliefSets) -> np.ndarray:
    """Observation kernel ``P[s, m]`` realising ``alpha`` at ``sets.priors[prior]``.

    Supported states get ``alpha_m * posterior_m(s) / b(s)``.  States outside
    the prior's support carry no probability mass, so their rows are fixed
    to the observation of the vertex posterior ``e_s``.
    """
    alpha = np.asarray(alpha, dtype=float)
    if abs(alpha.sum() - 1.0) > SUM_TOL or (alpha < -SUM_TOL).any():
        raise ValueError(f"alpha is not a distribution (sum {alpha.sum():.12g})")
    b = sets.priors[prior]
    on = b > SUPPORT_TOL
    kernel = np.zeros((sets.num_states, sets.num_posteriors))
    kernel[on] = (sets.posteriors[:, on] * alpha[:, None]).T / b[on, None]
    np.clip(kernel, 0.0, 1.0, out=kernel)  # rounding can push a certain observation past 1
    for s in np.flatnonzero(~on):
        kernel[s, sets.vertex_index[s]] = 1.0
    return kernel


def stage_information(prior: int, alpha, sets: BeliefSets) -> float:
    """Expected information gain ``sum_m alpha_m D(posterior_m || b)`` in nats."""
    alpha = np.asarray(alpha, dtype=float)
    b = sets.priors[prior]
    return float(sum(alpha[m] * kl_divergence(sets.posteriors[m], b) for m in np.flatnonzero(alpha > 0)))


def kernel_information(b, kernel) -> float:
    """Mutual information between state and observation, from the kernel directly.

    ``sum_s sum_z P(z|s) b(s) log(P(z|s) / sum_s' P(z|s') b(s'))``.
    """
    b = np.asarray(b, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    marginal = b @ kernel
    total = 0.0
    for s in range(b.size):
        if b[s] <= 0:
            continue
        for z in np.flatnonzero(kernel[s] > 0):
            total += kernel[s, z] * b[s] * np.log(kernel[s, z] / marginal[z])
    return float(total)
