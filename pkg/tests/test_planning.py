import itertools

import numpy as np
import pytest

from pomdplab import (CapExceededError, LatentPolicy, compose_with_approx_belief,
                      compose_with_true_belief, framestack_plan, framestack_q_learning,
                      gen_lower_bound, gen_noisy_sensor, gen_perturbed_block, gen_random_pomdp,
                      gen_smoothing_toy, latent_optimal, motor_noise_kernel, optimal_executable,
                      policy_value, smoothed_latent_optimal)
from pomdplab.planning import argmax_lowest

from helpers import uniform_model


def test_lower_bound_latent_expert():
    sol = latent_optimal(gen_lower_bound(0.1, 3))
    assert sol.value == pytest.approx(1.0)
    for h in range(3):
        assert list(sol.policy.greedy_actions(h)) == [0, 1]


def test_zero_reward_plays_action_zero():
    sol = latent_optimal(uniform_model(H=2))
    assert sol.value == 0.0
    assert all((sol.policy.greedy_actions(h) == 0).all() for h in range(2))


def test_argmax_lowest():
    assert argmax_lowest(np.array([0.3, 0.3 + 1e-14, 0.1])) == 0
    assert argmax_lowest(np.array([0.3, 0.4])) == 1


@pytest.mark.parametrize("seed", range(20))
def test_h1_brute_force(seed):
    m = gen_random_pomdp(seed, max_h=1)
    best = max(sum(m.init[s] * m.reward[0][s, a] for s, a in enumerate(acts))
               for acts in itertools.product(range(m.n_actions[0]), repeat=m.n_states[0]))
    assert latent_optimal(m).value == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_bellman_residual(seed):
    m = gen_random_pomdp(seed)
    sol = latent_optimal(m)
    for h in range(m.horizon):
        q = m.reward[h] + (m.trans[h] @ sol.V[h + 1] if h + 1 < m.horizon else 0.0)
        assert np.abs(sol.Q[h] - q).max() < 1e-12
        assert np.abs(sol.V[h] - q.max(axis=1)).max() < 1e-12


def test_latent_dominates_random_latent(rng):
    m = gen_random_pomdp(3)
    J = latent_optimal(m).value
    for _ in range(10):
        rows = [rng.dirichlet(np.ones(A), size=S) for S, A in zip(m.n_states, m.n_actions)]
        assert policy_value(m, LatentPolicy(rows)).value <= J + 1e-12


def test_motor_noise_kernels():
    K = motor_noise_kernel(4, 0.2)
    assert np.allclose(K.sum(axis=1), 1) and K[0, 0] == pytest.approx(0.85)
    B = motor_noise_kernel(5, 1, "ball")
    assert np.allclose(B[2], [0, 1 / 3, 1 / 3, 1 / 3, 0])
    assert np.allclose(B[0], [0.5, 0.5, 0, 0, 0])


def test_eta_zero_recovers_plain_expert():
    m = gen_random_pomdp(5)
    plain, smooth = latent_optimal(m), smoothed_latent_optimal(m, 0.0)
    for h in range(m.horizon):
        assert np.array_equal(plain.policy.act[h], smooth.policy.act[h])


def test_eta_one_is_degenerate():
    m = gen_random_pomdp(6)
    sol = smoothed_latent_optimal(m, 1.0)
    for h in range(m.horizon):
        assert (sol.policy.greedy_actions(h) == 0).all()
    assert sol.value == pytest.approx(policy_value(m, LatentPolicy.uniform(m)).value, abs=1e-12)


def test_smoothing_toy_expert_becomes_robust():
    m = gen_smoothing_toy(0, n_pairs=2)
    acts = smoothed_latent_optimal(m, 1, "ball").policy.greedy_actions(0)
    assert list(acts) == [2, 2, 5, 5]


def test_compose_true_lower_bound(derived):
    m = gen_lower_bound(0.1, 2)
    pol = compose_with_true_belief(m, latent_optimal(m))
    assert np.allclose(pol.action_probs(0, (0,), ()), [0.9, 0.1])
    assert policy_value(m, pol).value == pytest.approx(float(derived["lb_d0.1_H2_J_composed"]), abs=1e-12)


def test_compose_true_zero_delta_matches_expert():
    m, _ = gen_perturbed_block(3, 6, 2, 4, 0.0, "stochastic", seed=4)
    expert = latent_optimal(m)
    assert policy_value(m, compose_with_true_belief(m, expert)).value == pytest.approx(expert.value, abs=1e-12)


def test_compose_uniform_expert_is_uniform():
    m = gen_random_pomdp(7)
    pol = compose_with_true_belief(m, LatentPolicy.uniform(m))
    row = pol.action_probs(0, (int(np.flatnonzero(m.init @ m.emit[0])[0]),), ())
    assert np.allclose(row, 1 / m.n_actions[0])


def test_compose_approx_reproduces_lower_bound(derived):
    m = gen_lower_bound(0.1, 2)
    pol = compose_with_approx_belief(m, latent_optimal(m), 1)
    assert policy_value(m, pol).value == pytest.approx(float(derived["lb_d0.1_H2_J_composed"]), abs=1e-12)


def test_executable_optimum_fully_observed():
    m, _ = gen_noisy_sensor(3, 3, 0.0, seed=2)
    assert optimal_executable(m)[1] == pytest.approx(latent_optimal(m).value, abs=1e-12)


def test_executable_optimum_lower_bound(derived):
    m = gen_lower_bound(0.1, 2)
    policy, J = optimal_executable(m)
    assert J == pytest.approx(float(derived["lb_d0.1_H2_J_best_history"]), abs=1e-12)
    assert policy_value(m, policy).value == pytest.approx(J, abs=1e-12)


@pytest.mark.parametrize("seed", range(15))
def test_executable_optimum_sandwich(seed):
    m = gen_random_pomdp(seed)
    policy, J = optimal_executable(m)
    assert policy_value(m, policy).value == pytest.approx(J, abs=1e-9)
    assert J <= latent_optimal(m).value + 1e-12
    assert policy_value(m, compose_with_true_belief(m, latent_optimal(m))).value <= J + 1e-12


def test_executable_optimum_cap():
    with pytest.raises(CapExceededError):
        optimal_executable(gen_lower_bound(0.1, 12), cap=1000)


def test_framestack_plan_decodable_matches_latent():
    m, _ = gen_perturbed_block(3, 5, 2, 4, 0.0, "stochastic", seed=8)
    assert policy_value(m, framestack_plan(m, 1)).value == pytest.approx(latent_optimal(m).value, abs=1e-12)


def test_framestack_plan_lower_bound():
    m = gen_lower_bound(0.1, 4)
    for L in (1, 2):
        assert policy_value(m, framestack_plan(m, L)).value == pytest.approx(0.9, abs=1e-12)


def test_framestack_plan_rejects_zero_window():
    with pytest.raises(ValueError):
        framestack_plan(gen_lower_bound(0.1, 2), 0)


def test_q_learning_decodable_convergence():
    m, _ = gen_perturbed_block(2, 4, 2, 3, 0.0, "stochastic", seed=11)
    pol = framestack_q_learning(m, 1, 20_000, seed=0)
    assert latent_optimal(m).value - policy_value(m, pol).value <= 0.02


def test_q_learning_lower_bound():
    m = gen_lower_bound(0.1, 3)
    pol = framestack_q_learning(m, 1, 20_000, seed=1)
    assert policy_value(m, pol).value >= 0.9 - 0.02


def test_q_learning_zero_episodes_plays_action_zero():
    m = gen_lower_bound(0.1, 2)
    pol = framestack_q_learning(m, 2, 0)
    assert np.array_equal(pol.action_probs(1, (1, 1), (1,)), [1.0, 0.0])


def test_q_learning_reproducible():
    m = gen_random_pomdp(13)
    a = framestack_q_learning(m, 2, 500, seed=4)
    b = framestack_q_learning(m, 2, 500, seed=4)
    assert policy_value(m, a).value == policy_value(m, b).value
