import math

import numpy as np
import pytest

from ifbs.belief import build_prior_set, build_simplex_grid
from ifbs.diagnostics import (
    BOUND_CAVEAT,
    approximation_bound,
    beta_zero_oracle,
    check_entropy_perturbation,
    entropy_gap_bound,
    mdp_oracle_values,
    refinement_monotonicity,
)
from ifbs.solver import value_iteration

from conftest import toy_model


def test_oracle_zero_cost():
    model = toy_model([np.eye(3)], np.zeros((3, 1)))
    np.testing.assert_array_equal(mdp_oracle_values(model), 0)


def test_oracle_absorbing_unit_cost():
    model = toy_model([[[1.0]]], [[1.0]], gamma=0.8)
    assert mdp_oracle_values(model)[0] == pytest.approx(5.0, abs=1e-9)


def test_oracle_three_state_baseline(three_state):
    v = mdp_oracle_values(three_state.with_params(beta=0.0))
    # fixed point of the fully observed Bellman equation
    q = three_state.cost.T + 0.95 * three_state.transition @ v
    np.testing.assert_allclose(v, q.min(axis=0), atol=1e-9)
    assert v[2] > v[0] >= 0 and v[2] > v[1] >= 0


def test_entropy_bound_edges():
    assert entropy_gap_bound(0.0, 3) == 0.0
    # equality case for two states
    assert abs(0 - math.log(2)) <= entropy_gap_bound(0.5, 2) + 1e-15


@pytest.mark.parametrize("n", [2, 3, 5, 10])
def test_entropy_bound_random_pairs(n):
    rep = check_entropy_perturbation(n, trials=300, seed=n)
    assert rep.passed, rep.details["failures"][:3]
    assert rep.details["max_ratio"] <= 1.0


def test_entropy_bound_bad_trials():
    with pytest.raises(ValueError):
        check_entropy_perturbation(3, trials=0)


def test_monotonicity_small(three_state):
    rep = refinement_monotonicity(three_state, [0.5, 0.25], tol=1e-10)
    assert rep.passed
    assert rep.details["steps"][0]["shared_posteriors"] == 6
    kinds = {r["kind"] for r in rep.details["table"]}
    assert kinds == {"posterior", "prior"}


def test_monotonicity_duplicate_spacing(three_state):
    rep = refinement_monotonicity(three_state, [0.5, 0.5], tol=1e-10)
    assert rep.passed and abs(rep.details["max_increase"]) <= 1e-12


def test_monotonicity_rejects_non_nested(three_state):
    with pytest.raises(ValueError):
        refinement_monotonicity(three_state, [0.5, 1 / 3])


def test_monotonicity_beta_zero_flat(three_state):
    rep = refinement_monotonicity(three_state.with_params(beta=0.0), [0.5, 0.25], tol=1e-11)
    s = rep.details["steps"][0]
    assert abs(s["max_increase_posterior"]) < 1e-6
    vals = {(r["spacing"], r["kind"], r["index"]): r["value"] for r in rep.details["table"]}
    assert vals  # table populated


def test_beta_zero_oracle(three_state):
    rep = beta_zero_oracle(three_state)
    assert rep.passed and rep.details["max_gap"] <= 1e-6


def test_bound_report(three_state):
    sets = build_prior_set(build_simplex_grid(3, 0.1), three_state)
    res = value_iteration(three_state, sets, tol=1e-8)
    rep = approximation_bound(three_state, sets, res, num_samples=500)
    assert rep.caveats.startswith(BOUND_CAVEAT)
    for v in (rep.eps_hat, rep.delta_hat, rep.epsilon, rep.limsup_bound, rep.log_support_term):
        assert v >= 0 and math.isfinite(v)
    assert rep.limsup_bound == rep.epsilon / (1 - three_state.gamma)


def test_bound_gamma_zero(three_state):
    m = three_state.with_params(gamma=0.0)
    sets = build_prior_set(build_simplex_grid(3, 0.25), m)
    res = value_iteration(m, sets, tol=1e-10)
    rep = approximation_bound(m, sets, res, num_samples=300)
    expected = (m.beta * entropy_gap_bound(rep.eps_hat, 3)
                + rep.eps_hat * (m.beta * rep.log_support_term + np.abs(m.cost).sum()))
    assert rep.epsilon == pytest.approx(expected)


def test_bound_vanishes_without_gap():
    model = toy_model([[[1.0]]], [[1.0]], gamma=0.5, beta=1.0)
    sets = build_prior_set(np.eye(1), model)
    rep = approximation_bound(model, sets, value_iteration(model, sets), num_samples=10)
    assert rep.eps_hat == 0 and rep.delta_hat == 0 and rep.epsilon == 0
