import numpy as np
import pytest

from pomdplab import (LatentPolicy, behavior_cloning, forward_finite, forward_population,
                      gen_lower_bound, gen_noisy_sensor, gen_perturbed_block, latent_optimal,
                      policy_value, trajectory_tv)


@pytest.mark.parametrize("L", [1, 2, 3])
def test_forward_population_decodable_matches_expert(L):
    m, _ = gen_perturbed_block(3, 6, 2, 4, 0.0, "stochastic", seed=1)
    expert = latent_optimal(m)
    assert policy_value(m, forward_population(m, expert, L)).value == pytest.approx(expert.value, abs=1e-12)


def test_forward_population_lower_bound(derived):
    for d in (0.05, 0.1, 0.3):
        m = gen_lower_bound(d, 2)
        pol = forward_population(m, latent_optimal(m), 1)
        assert np.allclose(pol.action_probs(1, (0,), (1,)), [1 - d, d])
        assert policy_value(m, pol).value == pytest.approx(float(derived[f"lb_forward_d{d}"]), abs=1e-12)


def test_forward_population_uniform_expert():
    m, _ = gen_noisy_sensor(2, 3, 0.2, seed=0)
    pol = forward_population(m, LatentPolicy.uniform(m), 2)
    for h in range(3):
        for row in pol.table[h].values():
            assert np.allclose(row, 0.5)


def test_forward_population_occupancies():
    m, _ = gen_perturbed_block(2, 3, 2, 4, 0.2, seed=2)
    _, occ = forward_population(m, latent_optimal(m), 2, return_occupancies=True)
    assert len(occ) == 4 and all(abs(d.sum() - 1) < 1e-12 for d in occ)


def test_forward_finite_converges_to_population():
    m = gen_lower_bound(0.1, 3)
    expert = latent_optimal(m)
    pop = forward_population(m, expert, 1)
    fin = forward_finite(m, expert, 1, 10_000, seed=0)
    assert trajectory_tv(m, pop, fin).value <= 0.05


def test_forward_finite_zero_samples_is_uniform():
    m = gen_lower_bound(0.1, 2)
    pol = forward_finite(m, latent_optimal(m), 1, 0, seed=0)
    assert np.allclose(pol.action_probs(1, (0,), (1,)), 0.5)


def test_forward_finite_decodable_limit():
    m, _ = gen_perturbed_block(2, 4, 2, 3, 0.0, "stochastic", seed=3)
    expert = latent_optimal(m)
    pol = forward_finite(m, expert, 1, 1000, seed=1)
    assert expert.value - policy_value(m, pol).value <= 0.02


def test_forward_finite_reproducible():
    m, _ = gen_noisy_sensor(2, 3, 0.2, seed=4)
    e = latent_optimal(m)
    a, b = forward_finite(m, e, 2, 300, seed=9), forward_finite(m, e, 2, 300, seed=9)
    assert all(a.table[h].keys() == b.table[h].keys() for h in range(3))
    assert all(np.array_equal(a.table[h][k], b.table[h][k]) for h in range(3) for k in a.table[h])


def test_behavior_cloning_decodable_limit():
    m, _ = gen_perturbed_block(2, 4, 2, 3, 0.0, "stochastic", seed=5)
    expert = latent_optimal(m)
    pol = behavior_cloning(m, expert, 1, 1000, seed=0)
    assert expert.value - policy_value(m, pol).value <= 0.02


def test_behavior_cloning_lower_bound_matches_forward():
    # uniform dynamics make the expert's past actions uninformative about s_h
    m = gen_lower_bound(0.1, 3)
    expert = latent_optimal(m)
    bc = behavior_cloning(m, expert, 1, 50_000, include_actions=False, seed=2)
    fw = forward_population(m, expert, 1)
    assert abs(policy_value(m, bc).value - policy_value(m, fw).value) <= 0.01


def test_behavior_cloning_zero_samples_is_uniform():
    m = gen_lower_bound(0.1, 2)
    pol = behavior_cloning(m, latent_optimal(m), 2, 0)
    assert np.allclose(pol.action_probs(1, (0, 1), ()), 0.5)


@pytest.mark.parametrize("seed", range(4))
def test_longer_windows_help_under_deterministic_dynamics(seed):
    m, _ = gen_perturbed_block(3, 6, 2, 5, 0.1, "deterministic", seed=seed)
    expert = latent_optimal(m)
    gaps = [expert.value - policy_value(m, forward_population(m, expert, L)).value for L in (1, 3)]
    assert 0 <= gaps[1] < gaps[0]


def test_window_gap_nearly_monotone():
    # only the upper bound is monotone in L; the gap itself can tick up by ~1e-5
    worst = -np.inf
    for seed in range(8):
        m, _ = gen_perturbed_block(3, 6, 2, 5, 0.1, "deterministic", seed=seed)
        expert = latent_optimal(m)
        gaps = [expert.value - policy_value(m, forward_population(m, expert, L)).value
                for L in (1, 2, 3, 4)]
        worst = max(worst, max(b - a for a, b in zip(gaps, gaps[1:])))
    assert worst <= 1e-4


def test_forward_zero_delta_gap_is_zero_for_every_window():
    m, _ = gen_perturbed_block(3, 6, 2, 5, 0.0, "deterministic", seed=0)
    expert = latent_optimal(m)
    for L in (1, 2, 3, 4):
        assert expert.value - policy_value(m, forward_population(m, expert, L)).value == pytest.approx(0, abs=1e-12)


def test_forward_finite_consistency_on_random_instances():
    from pomdplab import gen_random_pomdp
    from pomdplab.bench import forward_window_tv
    for seed in range(10):
        m = gen_random_pomdp(500 + seed, max_h=3, max_product=2000)
        expert = latent_optimal(m)
        assert forward_window_tv(m, expert, 1, 10_000, seed) <= 0.05
