import numpy as np
import pytest

from pomdplab import (LatentPolicy, LayeredPomdp, MonteCarlo, action_prediction_error, belief_contraction_error,
                      compose_with_true_belief, decodability_error, gen_lower_bound,
                      gen_noisy_sensor, gen_perturbed_block, gen_random_pomdp, gen_smoothing_toy,
                      generalized_contraction, latent_optimal, policy_value,
                      smoothed_latent_optimal, suboptimality, trajectory_tv)
from pomdplab.bench import random_latent_policy, random_window_policy
from pomdplab.core import enumerate_trajectories

from helpers import greedy_obs

MC = MonteCarlo(20_000, 3)


def _agree(exact, est, k=4.0):
    return abs(exact.value - est.value) <= k * est.stderr + 1e-12


def test_decodability_zero_delta_block():
    m, _ = gen_perturbed_block(3, 6, 2, 4, 0.0, seed=0)
    pol = random_window_policy(m, 1, False, np.random.default_rng(0))
    assert all(decodability_error(m, pol, h).value == 0 for h in range(4))


def test_decodability_lower_bound_is_delta():
    for d in (0.05, 0.1, 0.3):
        m = gen_lower_bound(d, 4)
        pol = greedy_obs(m)
        for h in range(4):
            assert decodability_error(m, pol, h).value == pytest.approx(d, abs=1e-12)


def test_decodability_deterministic_dynamics_bounded_by_delta():
    for seed in range(5):
        m, _ = gen_perturbed_block(3, 6, 2, 5, 0.1, "deterministic", seed=seed)
        pol = compose_with_true_belief(m, latent_optimal(m))
        for h in range(5):
            est = decodability_error(m, pol, h, MonteCarlo(5000, seed))
            assert est.value <= 0.1 + 3 * est.stderr


def test_contraction_uniform_mixing_is_zero():
    m, _ = gen_perturbed_block(3, 5, 2, 4, 0.2, "uniformMixing", seed=1)
    pol = random_window_policy(m, 1, True, np.random.default_rng(1))
    for L in (1, 2):
        for h in range(4):
            assert belief_contraction_error(m, pol, h, L).value <= 1e-12


def test_contraction_zero_delta_and_short_histories():
    m, _ = gen_perturbed_block(2, 4, 2, 4, 0.0, seed=2)
    pol = random_window_policy(m, 2, True, np.random.default_rng(2))
    assert all(belief_contraction_error(m, pol, h, 1).value <= 1e-12 for h in range(4))
    m = gen_random_pomdp(3)
    assert belief_contraction_error(m, LatentPolicy.uniform(m), 0, 1).value == 0.0


def test_contraction_impossible_window_counts_two():
    # identity dynamics and sensor: a point-mass prior on state 0 rules out every window from state 1
    I2 = np.stack([np.eye(2)] * 2, axis=1)
    m = LayeredPomdp([0.5, 0.5], [I2], [np.eye(2)] * 2, [np.zeros((2, 2))] * 2)
    pol = LatentPolicy.uniform(m)
    assert belief_contraction_error(m, pol, 1, 1, prior=[1.0, 0.0]).value == pytest.approx(1.0)
    assert belief_contraction_error(m, pol, 1, 1, prior=[1.0, 0.0], mode=MC).value == pytest.approx(1.0, abs=0.03)


def test_generalized_contraction_equal_priors_is_zero():
    m, _ = gen_perturbed_block(2, 3, 2, 4, 0.2, seed=3)
    pol = random_window_policy(m, 2, True, np.random.default_rng(3))
    D = np.array([0.3, 0.7])
    est, ratio = generalized_contraction(m, pol, 3, 2, D, D, (0, 1), (1,))
    assert est.value == pytest.approx(0, abs=1e-12) and ratio == 1.0


def test_generalized_contraction_lower_bound_is_zero():
    m = gen_lower_bound(0.1, 4)
    est, ratio = generalized_contraction(m, greedy_obs(m), 3, 2, [0.5, 0.5], [0.9, 0.1], (0, 1), (1,))
    assert est.value == pytest.approx(0, abs=1e-12) and ratio == pytest.approx(1.8)


def test_generalized_contraction_infinite_ratio_reported():
    m, _ = gen_perturbed_block(2, 3, 2, 3, 0.2, seed=4)
    pol = random_window_policy(m, 1, False, np.random.default_rng(0))
    est, ratio = generalized_contraction(m, pol, 2, 1, [1.0, 0.0], [0.5, 0.5], (0, 1), (0,))
    assert ratio == np.inf and 0 <= est.value <= 2


@pytest.mark.parametrize("seed", range(10))
def test_generalized_contraction_exact_vs_mc(seed):
    m, _ = gen_perturbed_block(2, 3, 2, 4, 0.3, "stochastic", "randomDirichlet", seed=seed)
    rng = np.random.default_rng(seed)
    pol = random_window_policy(m, 2, True, rng)
    D, Dp = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
    exact, _ = generalized_contraction(m, pol, 3, 2, D, Dp, (0, 2), (1,))
    est, _ = generalized_contraction(m, pol, 3, 2, D, Dp, (0, 2), (1,), MonteCarlo(20_000, seed))
    assert _agree(exact, est)


def test_generalized_contraction_rejects_bad_prefix():
    m = gen_lower_bound(0.1, 3)
    with pytest.raises(ValueError):
        generalized_contraction(m, greedy_obs(m), 2, 1, [0.5, 0.5], [0.5, 0.5], (0,), ())


def test_ape_constant_expert_is_zero():
    m = gen_random_pomdp(5)
    expert = LatentPolicy.from_actions([[0] * S for S in m.n_states], m.n_actions)
    for h in range(m.horizon):
        assert action_prediction_error(m, expert, LatentPolicy.uniform(m), h).value == pytest.approx(0, abs=1e-12)


def test_ape_lower_bound_equals_decodability():
    m = gen_lower_bound(0.1, 3)
    expert, pol = latent_optimal(m), greedy_obs(m)
    for h in range(3):
        ape = action_prediction_error(m, expert, pol, h).value
        assert ape == pytest.approx(0.1, abs=1e-12)
        assert ape == pytest.approx(decodability_error(m, pol, h).value, abs=1e-12)


def test_ape_injective_relabel_matches_decodability():
    for seed in range(5):
        m, _ = gen_noisy_sensor(3, 3, 0.2, seed=seed)
        perm = np.random.default_rng(seed).permutation(3)
        expert = LatentPolicy.from_actions([perm] * 3, m.n_actions)
        pol = random_window_policy(m, 1, True, np.random.default_rng(seed))
        for h in range(3):
            assert action_prediction_error(m, expert, pol, h).value == pytest.approx(
                decodability_error(m, pol, h).value, abs=1e-12)


def test_ape_smoothing_toy():
    for seed in range(5):
        m = gen_smoothing_toy(seed)
        pol = LatentPolicy.uniform(m)
        assert action_prediction_error(m, latent_optimal(m), pol, 0).value > 0
        assert action_prediction_error(m, smoothed_latent_optimal(m, 1, "ball"), pol, 0).value == 0


def test_trajectory_tv_self_is_zero():
    m = gen_random_pomdp(6)
    pol = random_window_policy(m, 2, True, np.random.default_rng(6))
    assert trajectory_tv(m, pol, pol).value == 0
    assert trajectory_tv(m, pol, pol, "perStepBound").value == 0
    assert trajectory_tv(m, pol, pol, MC).value == 0


def test_trajectory_tv_lower_bound(derived):
    m = gen_lower_bound(0.1, 2)
    assert trajectory_tv(m, latent_optimal(m).policy, greedy_obs(m)).value == pytest.approx(
        float(derived["lb_d0.1_H2_tv_latent_greedy"]), abs=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_trajectory_tv_dominance(seed):
    m = gen_random_pomdp(seed, max_product=5000)
    rng = np.random.default_rng(seed)
    a = random_latent_policy(m, rng, bool(seed % 2))
    b = random_window_policy(m, 1 + seed % 2, bool(seed % 3), rng)
    exact = trajectory_tv(m, a, b).value
    assert exact <= trajectory_tv(m, a, b, "perStepBound").value + 1e-12
    assert exact >= abs(policy_value(m, a).value - policy_value(m, b).value) - 1e-12


def test_trajectory_tv_mc_matches_per_step():
    m = gen_random_pomdp(7)
    rng = np.random.default_rng(7)
    a, b = random_latent_policy(m, rng, False), random_window_policy(m, 1, False, rng)
    assert _agree(trajectory_tv(m, a, b, "perStepBound"), trajectory_tv(m, a, b, MC))


def test_suboptimality_examples():
    m = gen_lower_bound(0.1, 3)
    assert suboptimality(m, latent_optimal(m).policy).value == pytest.approx(0, abs=1e-12)
    assert suboptimality(m, greedy_obs(m)).value == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(ValueError):
        suboptimality(m, greedy_obs(m), "oracle")


@pytest.mark.parametrize("seed", range(10))
def test_latent_reference_dominates_executable(seed):
    m = gen_random_pomdp(seed)
    pol = random_window_policy(m, 1, True, np.random.default_rng(seed))
    assert suboptimality(m, pol, "latent").value >= suboptimality(m, pol, "executable").value - 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_exact_and_mc_agree(seed):
    m = gen_random_pomdp(300 + seed)
    rng = np.random.default_rng(seed)
    pol = random_window_policy(m, 1, True, rng)
    expert = random_latent_policy(m, rng, False)
    h = m.horizon - 1
    mc = MonteCarlo(20_000, seed)
    assert _agree(policy_value(m, pol), policy_value(m, pol, mc))
    assert _agree(decodability_error(m, pol, h), decodability_error(m, pol, h, mc))
    assert _agree(belief_contraction_error(m, pol, h, 1), belief_contraction_error(m, pol, h, 1, mode=mc))
    assert _agree(action_prediction_error(m, expert, pol, h), action_prediction_error(m, expert, pol, h, mc))


def test_unknown_mode_rejected():
    m = gen_lower_bound(0.1, 2)
    with pytest.raises(ValueError):
        belief_contraction_error(m, greedy_obs(m), 1, 1, mode="fast")
    with pytest.raises(ValueError):
        trajectory_tv(m, greedy_obs(m), greedy_obs(m), "approx")


def test_history_law_mass():
    from pomdplab.metrics import history_law
    m = gen_random_pomdp(8)
    pol = LatentPolicy.uniform(m)
    law = history_law(m, pol, m.horizon - 1)
    assert abs(sum(v.sum() for v in law.values()) - 1) < 1e-12
    assert len(law) <= len(enumerate_trajectories(m, pol))
