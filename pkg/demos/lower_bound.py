"""Two-state instance where a one-step window loses to the latent expert.

Prints the value of each policy family as the horizon grows, next to the
closed-form gap between the expert and greedy play on the last observation.
"""

import argparse

from pomdplab import (compose_with_true_belief, forward_population, framestack_plan, gen_lower_bound,
                      latent_optimal, optimal_executable, policy_value, trajectory_tv)
from pomdplab.bench import greedy_observation_policy


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--max-h", type=int, default=6)
    args = p.parse_args()

    print(f"{'H':>2} {'latent':>7} {'best exec':>9} {'greedy':>7} {'compose':>7} {'forward':>7} "
          f"{'fstack':>7} {'TV':>7} {'1-(1-d)^H':>9}")
    for H in range(2, args.max_h + 1):
        m = gen_lower_bound(args.delta, H)
        expert = latent_optimal(m)
        greedy = greedy_observation_policy(m)
        J = {
            "latent": expert.value,
            "exec": optimal_executable(m)[1],
            "greedy": policy_value(m, greedy).value,
            "compose": policy_value(m, compose_with_true_belief(m, expert)).value,
            "forward": policy_value(m, forward_population(m, expert, 1)).value,
            "fstack": policy_value(m, framestack_plan(m, 1)).value,
        }
        tv = trajectory_tv(m, expert.policy, greedy).value
        print(f"{H:>2} {J['latent']:7.4f} {J['exec']:9.4f} {J['greedy']:7.4f} {J['compose']:7.4f} "
              f"{J['forward']:7.4f} {J['fstack']:7.4f} {tv:7.4f} {1 - (1 - args.delta) ** H:9.4f}")


if __name__ == "__main__":
    main()
