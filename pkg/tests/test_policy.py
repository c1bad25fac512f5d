import math

import numpy as np
import pytest

from ifbs.belief import BeliefSets, bayes_update, build_prior_set, kl_divergence
from ifbs.policy import (
    PerceptionActionPolicy,
    action_of,
    kernel_information,
    reconstruct_kernel,
    stage_information,
)
from ifbs.solver import posterior_backup, value_iteration

from conftest import toy_model


@pytest.fixture(scope="module")
def policy(result_02):
    return PerceptionActionPolicy.from_result(result_02)


def two_state_sets():
    model = toy_model([np.eye(2)], np.zeros((2, 1)))
    return build_prior_set(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]), model)


def test_uninformative_kernel():
    sets = two_state_sets()
    p = int(np.flatnonzero(np.all(sets.priors == 0.5, axis=1))[0])
    k = reconstruct_kernel(p, [0, 0, 1], sets)
    np.testing.assert_array_equal(k[:, 2], 1.0)
    assert stage_information(p, [0, 0, 1], sets) == 0.0


def test_perfect_observation_kernel():
    sets = two_state_sets()
    p = int(np.flatnonzero(np.all(sets.priors == 0.5, axis=1))[0])
    k = reconstruct_kernel(p, [0.5, 0.5, 0], sets)
    np.testing.assert_allclose(k[:, :2], np.eye(2))
    assert stage_information(p, [0.5, 0.5, 0], sets) == pytest.approx(math.log(2))
    assert kernel_information(sets.priors[p], k) == pytest.approx(math.log(2))


def test_vertex_prior_kernel():
    sets = two_state_sets()
    p = int(np.flatnonzero(np.all(sets.priors == [1, 0], axis=1))[0])
    k = reconstruct_kernel(p, [1, 0, 0], sets)
    np.testing.assert_array_equal(k[0], [1, 0, 0])
    # the unsupported state reports its own vertex observation
    np.testing.assert_array_equal(k[1], [0, 1, 0])


def test_bad_alpha():
    with pytest.raises(ValueError):
        reconstruct_kernel(0, [0.5, 0.2, 0], two_state_sets())


def test_kernel_properties_on_solution(result_02, sets_02, policy):
    for p in range(sets_02.num_priors):
        b = sets_02.priors[p]
        alpha = result_02.alpha(p)
        k = policy.kernel(p)
        assert (k >= 0).all()
        np.testing.assert_allclose(k.sum(axis=1), 1, atol=1e-9)
        np.testing.assert_allclose(b @ k, alpha, atol=1e-9)
        np.testing.assert_allclose((b @ k) @ sets_02.posteriors, b, atol=1e-9)
        for m in np.flatnonzero(alpha > 1e-12):
            post, prob = bayes_update(b, k[:, m])
            np.testing.assert_allclose(post, sets_02.posteriors[m], atol=1e-9)
            assert prob == pytest.approx(alpha[m], abs=1e-12)
        # information identity: alpha form equals the direct mutual information
        assert stage_information(p, alpha, sets_02) == pytest.approx(kernel_information(b, k), abs=1e-9)


def test_mixed_alpha_double_sum(sets_02, result_02):
    b = sets_02.priors[5]
    # average of the vertex decomposition and the solved alpha (both feasible)
    alpha = np.zeros(21)
    alpha[sets_02.vertex_index] = b
    alpha = 0.5 * alpha + 0.5 * result_02.alpha(5)
    k = reconstruct_kernel(5, alpha, sets_02)
    direct = sum(k[s, z] * b[s] * math.log(k[s, z] / (b @ k)[z])
                 for s in range(3) for z in range(21) if k[s, z] > 0 and b[s] > 0)
    assert stage_information(5, alpha, sets_02) == pytest.approx(direct, abs=1e-12)


def test_observation_row_matches_kernel(sets_02, policy):
    for p in (0, 10, 40):
        k = policy.kernel(p)
        for s in range(3):
            idx, probs = policy.observation_row(p, s)
            row = np.zeros(21)
            row[idx] = probs
            np.testing.assert_allclose(row, k[s], atol=1e-12)


def test_actions(result_02, three_state, sets_02, policy):
    for m in range(sets_02.num_posteriors):
        assert action_of(m, policy) == posterior_backup(m, result_02.V, three_state, sets_02)[1]
    zero = toy_model([np.eye(2), np.eye(2)], np.zeros((2, 2)))
    sets = build_prior_set(np.eye(2), zero)
    pol = PerceptionActionPolicy.from_result(value_iteration(zero, sets))
    assert all(action_of(m, pol) == 0 for m in range(2))


def test_dominant_action():
    model = toy_model([np.eye(2), np.eye(2)], [[3, 1], [3, 1]])
    sets = build_prior_set(np.eye(2), model)
    pol = PerceptionActionPolicy.from_result(value_iteration(model, sets))
    assert action_of(0, pol) == 1


def test_to_dict(policy):
    d = policy.to_dict(dense_kernels=True)
    assert len(d["alpha"]) == policy.sets.num_priors
    assert np.array(d["kernels"]).shape == (policy.sets.num_priors, 3, 21)
    assert "kernels" not in policy.to_dict()


def test_stage_information_uses_divergence(sets_02, result_02):
    p = 3
    alpha = result_02.alpha(p)
    b = sets_02.priors[p]
    ref = sum(alpha[m] * kl_divergence(sets_02.posteriors[m], b) for m in np.flatnonzero(alpha))
    assert stage_information(p, alpha, sets_02) == pytest.approx(ref, abs=1e-15)
    assert isinstance(sets_02, BeliefSets)
