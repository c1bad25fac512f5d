import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ifbs.belief import (
    AssumptionViolation,
    BeliefError,
    ZeroProbabilityObservation,
    bayes_update,
    build_local_blur_set,
    build_prior_set,
    build_simplex_grid,
    composition_count,
    dedup_rows,
    entropy,
    estimate_density,
    kl_divergence,
    local_blur_beliefs,
    predict,
    project_nearest,
    projection_distances,
    support,
)
from ifbs.model import GridworldConfig, build_gridworld, load_builtin_config

from conftest import toy_model


def dist(n, min_value=0.0):
    return arrays(np.float64, n, elements=st.floats(min_value, 1.0)).filter(lambda x: x.sum() > 1e-3).map(
        lambda x: x / x.sum())


# predict

def test_predict_three_state_vertex(three_state):
    np.testing.assert_array_equal(predict([1, 0, 0], 2, three_state), [0.998, 0.001, 0.001])


def test_predict_identity_and_doubly_stochastic():
    ident = toy_model([np.eye(3)], np.zeros((3, 1)))
    b = np.array([0.2, 0.3, 0.5])
    np.testing.assert_array_equal(predict(b, 0, ident), b)
    ds = toy_model([[[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]]], np.zeros((3, 1)))
    np.testing.assert_allclose(predict(np.full(3, 1 / 3), 0, ds), np.full(3, 1 / 3), atol=1e-15)


def test_predict_bad_action(three_state):
    with pytest.raises(IndexError):
        predict([1, 0, 0], 3, three_state)


@settings(max_examples=50)
@given(b=dist(3), a=st.integers(0, 2))
def test_predict_preserves_simplex(three_state, b, a):
    out = predict(b, a, three_state)
    assert (out >= 0).all()
    assert abs(out.sum() - 1) <= 1e-12


# bayes update

def test_bayes_uninformative():
    b = np.array([0.2, 0.8])
    post, alpha = bayes_update(b, [1, 1])
    np.testing.assert_array_equal(post, b)
    assert alpha == 1.0


def test_bayes_perfect():
    post, alpha = bayes_update([0.3, 0.7], [0, 1])
    np.testing.assert_array_equal(post, [0, 1])
    assert alpha == 0.7


def test_bayes_hand_value():
    post, alpha = bayes_update([0.5, 0.5], [0.2, 0.6])
    np.testing.assert_allclose(post, [0.25, 0.75])
    assert alpha == pytest.approx(0.4)


def test_bayes_zero_probability():
    with pytest.raises(ZeroProbabilityObservation):
        bayes_update([1, 0], [0, 1])


@settings(max_examples=50)
@given(b=dist(4), seed=st.integers(0, 10_000))
def test_bayes_marginalisation_recovers_prior(b, seed):
    rng = np.random.default_rng(seed)
    kernel = rng.dirichlet(np.ones(5), size=4)  # kernel[s, z]
    total = np.zeros(4)
    for z in range(5):
        try:
            post, alpha = bayes_update(b, kernel[:, z])
        except ZeroProbabilityObservation:
            continue
        total += alpha * post
    np.testing.assert_allclose(total, b, atol=1e-12)


# support, divergence, entropy

def test_support_examples():
    assert support([0, 1, 0]).tolist() == [1]
    assert support(np.full(3, 1 / 3)).tolist() == [0, 1, 2]
    assert support([0.5, 1e-15, 0.5]).tolist() == [0, 2]


def test_kl_examples():
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
    assert kl_divergence([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.130812, abs=1e-6)
    assert kl_divergence([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5))
    with pytest.raises(BeliefError):
        kl_divergence([0.5, 0.5], [1, 0])


@settings(max_examples=100)
@given(p=dist(4), q=dist(4, min_value=1e-3))
def test_kl_nonnegative(p, q):
    assert kl_divergence(p, q) >= 0
    assert kl_divergence(q, q) <= 1e-12


def test_entropy_examples():
    assert entropy([0, 1, 0]) == 0
    assert entropy(np.full(5, 0.2)) == pytest.approx(math.log(5))
    assert entropy([0.75, 0.25]) == pytest.approx(0.562335, abs=1e-6)


# grids

def test_simplex_grid_counts():
    assert build_simplex_grid(3, 0.2).shape == (21, 3)
    assert build_simplex_grid(3, 0.1).shape[0] == 66
    assert build_simplex_grid(3, 0.05).shape[0] == 231
    np.testing.assert_array_equal(build_simplex_grid(2, 0.5), [[1, 0], [0.5, 0.5], [0, 1]])


@pytest.mark.parametrize("n,k", [(2, 7), (3, 4), (4, 5), (5, 3)])
def test_simplex_grid_composition_count(n, k):
    g = build_simplex_grid(n, 1 / k)
    assert g.shape[0] == composition_count(n, k)
    np.testing.assert_allclose(g.sum(axis=1), 1, atol=1e-12)
    assert np.allclose(g * k, np.round(g * k))
    assert len({tuple(r) for r in g}) == g.shape[0]
    for s in range(n):
        assert (g == np.eye(n)[s]).all(axis=1).any()


def test_simplex_grid_bad_spacing():
    with pytest.raises(BeliefError):
        build_simplex_grid(3, 0.3)


# local blur scheme

def test_blur_count_12x12():
    cfg = load_builtin_config("mars")
    assert local_blur_beliefs(cfg).shape == (864, 144)


def test_blur_interior_cell_shapes():
    cfg = GridworldConfig(7, 7, (0, 0), [(6, 6)])
    rows = local_blur_beliefs(cfg)
    s = cfg.state((3, 3))
    block = rows[6 * s:6 * s + 6]
    np.testing.assert_array_equal(block[0], np.eye(49)[s])
    ring1 = [cfg.state((3 + dr, 3 + dc)) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    ring2 = [cfg.state((3 + dr, 3 + dc)) for dr in range(-2, 3) for dc in range(-2, 3)
             if max(abs(dr), abs(dc)) == 2]
    assert block[1][s] == 0.5 and np.allclose(block[1][ring1], 0.5 / 8)
    assert block[2][s] == 0.75 and np.allclose(block[2][ring1], 0.25 / 8)
    for row, c in zip(block[3:], (0.5, 0.35, 0.20)):
        assert row[s] == pytest.approx(c)
        np.testing.assert_allclose(row[ring1], (1 - c) / 16)
        np.testing.assert_allclose(row[ring2], (1 - c) / 32)
    np.testing.assert_allclose(rows.sum(axis=1), 1, atol=1e-12)


def test_blur_corner_redirection():
    cfg = GridworldConfig(4, 4, (0, 0), [(3, 3)])
    rows = local_blur_beliefs(cfg)
    corner = rows[1]  # 3x3 blur at (0, 0)
    # 5 of the 8 neighbours fall off and fold onto their nearest cells
    assert corner[0] == pytest.approx(0.5 + 3 * 0.5 / 8)
    assert corner.sum() == pytest.approx(1.0)


def test_blur_set_deduplicated():
    cfg = GridworldConfig(3, 3, (0, 0), [(2, 2)])
    rows = build_local_blur_set(cfg)
    kept, _ = dedup_rows(rows)
    assert kept.size == rows.shape[0]


# prior sets

def test_prior_set_three_state(three_state):
    sets = build_prior_set(build_simplex_grid(3, 0.2), three_state)
    assert sets.num_posteriors == 21
    assert sets.num_prior_images == 63
    assert sets.problems(three_state) == []


def test_prior_set_mars_counts():
    cfg = load_builtin_config("mars")
    sets = build_prior_set(local_blur_beliefs(cfg), build_gridworld(cfg))
    assert sets.num_prior_images == 3456
    assert sets.num_priors <= 3456


def test_prior_set_identity_dynamics():
    model = toy_model([np.eye(3), np.eye(3)], np.zeros((3, 2)))
    post = build_simplex_grid(3, 0.25)
    sets = build_prior_set(post, model)
    np.testing.assert_array_equal(sets.priors, post)
    np.testing.assert_array_equal(sets.prior_index[:, 0], np.arange(post.shape[0]))


def test_prior_set_missing_vertex(three_state):
    post = build_simplex_grid(3, 0.5)[1:]
    with pytest.raises(AssumptionViolation, match="e_0"):
        build_prior_set(post, three_state)


def test_prior_set_initial_rows(three_state):
    sets = build_prior_set(build_simplex_grid(3, 0.2), three_state, initial=[[1, 0, 0], [0.2, 0.3, 0.5]])
    assert len(sets.initial) == 2
    np.testing.assert_array_equal(sets.priors[sets.initial[1]], [0.2, 0.3, 0.5])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 5))
def test_prior_set_invariants_random_models(seed, k):
    rng = np.random.default_rng(seed)
    t = rng.dirichlet(np.ones(3) * 0.5, size=(2, 3))
    t[rng.random((2, 3, 3)) < 0.3] = 0  # create zeros and renormalise
    t[..., 0] += 1e-3
    t /= t.sum(axis=2, keepdims=True)
    model = toy_model(t, np.zeros((3, 2)))
    sets = build_prior_set(build_simplex_grid(3, 1 / k), model)
    assert sets.problems(model) == []


# projection and density

def test_project_member_and_vertex():
    grid = build_simplex_grid(3, 0.2)
    for i in (0, 7, 20):
        assert project_nearest(grid[i], grid) == i
    assert project_nearest([0, 0, 1], grid) == int(np.flatnonzero((grid == [0, 0, 1]).all(axis=1))[0])


def test_project_respects_support():
    grid = build_simplex_grid(3, 0.2)
    j = project_nearest([0.6, 0.4, 0], grid)
    assert grid[j][2] == 0
    assert np.abs(grid[j] - [0.6, 0.4, 0]).max() <= 0.1
    # exhaustive scan
    ok = [i for i, g in enumerate(grid) if g[2] == 0]
    assert np.abs(grid[j] - [0.6, 0.4, 0]).max() == min(np.abs(grid[i] - [0.6, 0.4, 0]).max() for i in ok)


def test_projection_distances_match_scalar():
    grid = build_simplex_grid(3, 0.25)
    pts = np.random.default_rng(1).dirichlet(np.ones(3), size=50)
    got = projection_distances(pts, grid)
    ref = [np.abs(grid[project_nearest(p, grid)] - p).max() for p in pts]
    np.testing.assert_allclose(got, ref)


def test_density_single_state():
    assert estimate_density(np.ones((1, 1))) == 0.0


def test_density_two_vertices():
    # (0.5, 0.5) has full support and can only project to a vertex
    assert estimate_density(np.eye(2)) == pytest.approx(0.5)


def test_density_half_grid():
    eps = estimate_density(build_simplex_grid(2, 0.5), num_samples=4000)
    assert 0.2 < eps <= 0.25 + 1e-12


def test_density_shrinks_with_refinement():
    e = [estimate_density(build_simplex_grid(3, s), 1000) for s in (0.5, 0.2, 0.1)]
    assert e[0] >= e[1] >= e[2]
