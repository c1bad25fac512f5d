"""Belief vectors and invariant finite belief sets.

Beliefs are plain 1-D float arrays over states; a set of beliefs is a 2-D
array with one belief per row.  Logarithms are natural throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .model import GridworldConfig, PerceptionMDP

SUPPORT_TOL = 1e-12
DEDUP_TOL = 1e-10
SIMPLEX_TOL = 1e-12


class BeliefError(ValueError):
    pass


class ZeroProbabilityObservation(BeliefError):
    pass


class AssumptionViolation(BeliefError):
    """The posterior set is missing a vertex of the belief simplex."""


def check_belief(b, num_states: int | None = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return ``b`` as a float array, raising if it is not a distribution."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or (num_states is not None and b.shape[0] != num_states):
        raise BeliefError(f"belief has shape {b.shape}, expected ({num_states},)")
    if (b < 0).any() or abs(b.sum() - 1.0) > tol:
        raise BeliefError(f"not a probability vector (min {b.min():.3g}, sum {b.sum():.15g})")
    return b


def predict(posterior, action: int, model: PerceptionMDP) -> np.ndarray:
    """Prior reached from ``posterior`` after taking ``action``."""
    if not 0 <= action < model.num_actions:
        raise IndexError(f"action {action} out of range for {model.num_actions} actions")
    return np.asarray(posterior, dtype=float) @ model.transition[action]


def bayes_update(prior, likelihood) -> tuple[np.ndarray, float]:
    """Condition ``prior`` on an observation with per-state ``likelihood``.

    Returns the posterior and the observation probability ``alpha``.
    """
    prior = np.asarray(prior, dtype=float)
    likelihood = np.asarray(likelihood, dtype=float)
    if ((likelihood < 0) | (likelihood > 1)).any():
        raise BeliefError("likelihood entries must lie in [0, 1]")
    joint = likelihood * prior
    alpha = float(joint.sum())
    if alpha <= SUPPORT_TOL:
        raise ZeroProbabilityObservation(f"observation has probability {alpha:.3g}")
    return joint / alpha, alpha


def support(b, tol: float = SUPPORT_TOL) -> np.ndarray:
    return np.flatnonzero(np.asarray(b) > tol)


def kl_divergence(p, q, tol: float = SUPPORT_TOL) -> float:
    """Relative entropy D(p||q) in nats, summed over the support of ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    outside = (p > tol) & ~(q > tol)
    if outside.any():
        raise BeliefError(f"support of p not contained in support of q (states {np.flatnonzero(outside)})")
    mask = (p > 0) & (q > tol)
    return max(float(np.sum(p[mask] * np.log(p[mask] / q[mask]))), 0.0)


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def build_simplex_grid(num_states: int, spacing: float) -> np.ndarray:
    """All beliefs whose coordinates are multiples of ``spacing``.

    ``spacing`` must be ``1/k`` for a positive integer ``k``; the result has
    ``C(k + n - 1, n - 1)`` rows, ordered lexicographically with the first
    coordinate descending (so ``e_1`` comes first).
    """
    k = round(1.0 / spacing)
    if k < 1 or abs(k * spacing - 1.0) > 1e-9:
        raise BeliefError(f"spacing {spacing} is not 1/k for an integer k")
    n = num_states
    rows = []
    # stars and bars: bar positions among k + n - 1 slots
    for bars in itertools.combinations(range(k + n - 1), n - 1):
        edges = (-1,) + bars + (k + n - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(n)])
    grid = np.array(rows, dtype=float)[::-1] / k
    return np.ascontiguousarray(grid)


def vertex_positions(beliefs: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Index of the unit vector ``e_s`` in ``beliefs`` for each state (-1 if absent)."""
    n = beliefs.shape[1]
    out = np.full(n, -1, dtype=int)
    hits = np.flatnonzero(beliefs.max(axis=1) >= 1.0 - tol)
    for m in hits:
        s = int(np.argmax(beliefs[m]))
        if out[s] < 0:
            out[s] = m
    return out


def dedup_rows(rows: np.ndarray, tol: float = DEDUP_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Drop near-duplicate rows (max-norm within ``tol``), keeping the first.

    Returns ``(kept_positions, representative)`` where ``representative[i]``
    is the position in ``kept_positions`` that stands in for row ``i``.
    """
    n = rows.shape[0]
    rep = np.full(n, -1, dtype=int)
    if n == 0:
        return np.zeros(0, dtype=int), rep
    tree = cKDTree(rows)
    neighbours: dict[int, list[int]] = {}
    for i, j in tree.query_pairs(tol, p=np.inf):
        neighbours.setdefault(max(i, j), []).append(min(i, j))
    kept = []
    for j in range(n):
        earlier = [rep[i] for i in neighbours.get(j, ()) if kept[rep[i]] == i]
        if earlier:
            rep[j] = min(earlier)
        else:
            rep[j] = len(kept)
            kept.append(j)
    return np.array(kept, dtype=int), rep


def _spread(config: GridworldConfig, center: tuple[int, int], weights: dict[int, float]) -> np.ndarray:
    """Belief with mass ``weights[ring]`` on every cell of each Chebyshev ring."""
    b = np.zeros(config.num_states)
    r0, c0 = center
    radius = max(weights)
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            ring = max(abs(dr), abs(dc))
            b[config.state(config.clip(r0 + dr, c0 + dc))] += weights[ring]
    return b


def local_blur_beliefs(config: GridworldConfig) -> np.ndarray:
    """Six posteriors per cell: the vertex, two 3x3 blurs and three 5x5 blurs.

    Rows are grouped by cell in state order.  Mass that would fall off the
    grid is moved to the nearest in-bounds cell.  No deduplication.
    """
    out = []
    for s in range(config.num_states):
        cell = config.cell(s)
        vertex = np.zeros(config.num_states)
        vertex[s] = 1.0
        out.append(vertex)
        for c in (0.5, 0.75):
            out.append(_spread(config, cell, {0: c, 1: (1 - c) / 8}))
        for c in (0.5, 0.35, 0.20):
            out.append(_spread(config, cell, {0: c, 1: (1 - c) / 16, 2: (1 - c) / 32}))
    return np.array(out)


def build_local_blur_set(config: GridworldConfig) -> np.ndarray:
    beliefs = local_blur_beliefs(config)
    kept, _ = dedup_rows(beliefs)
    return beliefs[kept]


@dataclass(frozen=True, eq=False)
class BeliefSets:
    """Posterior set, its prior image under every action, and index maps.

    ``prior_index[m, a]`` is the row of ``priors`` equal to
    ``predict(posteriors[m], a)``; ``vertex_index[s]`` is the row of
    ``posteriors`` holding ``e_s``.  ``initial`` lists the rows of ``priors``
    added explicitly as starting beliefs (they need not be images).
    """

    posteriors: np.ndarray
    priors: np.ndarray
    prior_index: np.ndarray
    vertex_index: np.ndarray
    num_prior_images: int
    initial: tuple[int, ...] = ()

    @property
    def num_posteriors(self) -> int:
        return self.posteriors.shape[0]

    @property
    def num_priors(self) -> int:
        return self.priors.shape[0]

    @property
    def num_states(self) -> int:
        return self.posteriors.shape[1]

    def problems(self, model: PerceptionMDP | None = None) -> list[str]:
        out = []
        if (self.vertex_index < 0).any():
            out.append(f"missing vertices for states {np.flatnonzero(self.vertex_index < 0).tolist()}")
        if model is not None:
            for a in range(model.num_actions):
                img = self.posteriors @ model.transition[a]
                err = np.abs(self.priors[self.prior_index[:, a]] - img).max(axis=1)
                for m in np.flatnonzero(err > SIMPLEX_TOL):
                    out.append(f"prior_index[{m}, {a}] is off by {err[m]:.3g}")
        pairs = cKDTree(self.priors).query_pairs(DEDUP_TOL, p=np.inf)
        if pairs:
            out.append(f"{len(pairs)} prior pairs within {DEDUP_TOL}")
        return out


def build_prior_set(posteriors, model: PerceptionMDP, initial=None) -> BeliefSets:
    """Predict every posterior under every action and deduplicate the images.

    ``initial`` optionally adds starting prior beliefs (one per row) that the
    solver should also value; they are appended after the images.
    """
    posteriors = np.array(posteriors, dtype=float)
    if posteriors.ndim != 2 or posteriors.shape[1] != model.num_states:
        raise BeliefError(f"posteriors must have shape (M, {model.num_states})")
    verts = vertex_positions(posteriors)
    missing = np.flatnonzero(verts < 0)
    if missing.size:
        raise AssumptionViolation(
            f"posterior set lacks the simplex vertex e_{missing[0]}"
            + (f" (and {missing.size - 1} more)" if missing.size > 1 else "")
        )
    m_count, n_a = posteriors.shape[0], model.num_actions
    # images ordered (m, a) with a fastest
    images = np.einsum("ms,ast->mat", posteriors, model.transition).reshape(m_count * n_a, -1)
    extra = np.zeros((0, model.num_states))
    if initial is not None:
        extra = np.atleast_2d(np.asarray(initial, dtype=float))
        for row in extra:
            check_belief(row, model.num_states, tol=1e-9)
    allrows = np.vstack([images, extra])
    kept, rep = dedup_rows(allrows)
    priors = allrows[kept]
    prior_index = rep[: m_count * n_a].reshape(m_count, n_a)
    init = tuple(int(i) for i in rep[m_count * n_a:])
    for arr in (posteriors, priors, prior_index, verts):
        arr.setflags(write=False)
    return BeliefSets(posteriors, priors, prior_index, verts, m_count * n_a, init)


def admissible_mask(b, posteriors: np.ndarray, tol: float = SUPPORT_TOL) -> np.ndarray:
    """Posteriors whose support lies inside the support of ``b``."""
    outside = np.asarray(b) <= tol
    return ~(posteriors[:, outside] > tol).any(axis=1)


def project_nearest(b, posteriors: np.ndarray, tol: float = SUPPORT_TOL) -> int:
    """Nearest posterior in max-norm among those supported inside ``supp(b)``.

    Ties go to the lowest index.  Always feasible when the set holds every
    vertex.
    """
    b = np.asarray(b, dtype=float)
    ok = np.flatnonzero(admissible_mask(b, posteriors, tol))
    if ok.size == 0:
        raise AssumptionViolation("no posterior has support inside supp(b)")
    dist = np.abs(posteriors[ok] - b).max(axis=1)
    return int(ok[np.argmin(dist)])


def projection_distances(points: np.ndarray, posteriors: np.ndarray, tol: float = SUPPORT_TOL) -> np.ndarray:
    """``||b - pi(b)||_inf`` for every row of ``points``."""
    out = np.empty(points.shape[0])
    post_nz = posteriors > tol
    for i in range(0, points.shape[0], 256):
        chunk = points[i:i + 256]
        outside = chunk <= tol
        # admissible[j, m]: posterior m has no mass where point j has none
        bad = (outside.astype(np.int8) @ post_nz.T.astype(np.int8)) > 0
        dist = np.abs(chunk[:, None, :] - posteriors[None, :, :]).max(axis=2)
        dist[bad] = np.inf
        out[i:i + 256] = dist.min(axis=1)
    return out


def _face_samples(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """Uniform samples on randomly chosen faces of the simplex."""
    out = np.zeros((count, n))
    sizes = rng.integers(1, n + 1, size=count)
    for i, k in enumerate(sizes):
        face = rng.choice(n, size=k, replace=False)
        out[i, face] = rng.dirichlet(np.ones(k))
    return out


def estimate_density(posteriors, num_samples: int = 2000, seed: int = 0) -> float:
    """Sampled estimate of the density parameter ``max_b ||b - pi(b)||_inf``.

    Evaluates uniform samples from the simplex interior, uniform samples on
    random faces, and (for at most four states) every face barycentre and
    every pairwise midpoint of posteriors.  The result is a lower bound on the
    true supremum over the simplex.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    posteriors = np.asarray(posteriors, dtype=float)
    n = posteriors.shape[1]
    if n == 1:
        return 0.0
    rng = np.random.Generator(np.random.Philox(seed))
    half = max(num_samples // 2, 1)
    pts = [rng.dirichlet(np.ones(n), size=half), _face_samples(rng, n, max(num_samples - half, 1))]
    if n <= 4:
        for k in range(1, n + 1):
            for face in itertools.combinations(range(n), k):
                p = np.zeros(n)
                p[list(face)] = 1.0 / k
                pts.append(p[None, :])
        i, j = np.triu_indices(posteriors.shape[0], k=1)
        pts.append(0.5 * (posteriors[i] + posteriors[j]))
    return float(projection_distances(np.vstack(pts), posteriors).max())


def composition_count(num_states: int, k: int) -> int:
    return math.comb(k + num_states - 1, num_states - 1)
