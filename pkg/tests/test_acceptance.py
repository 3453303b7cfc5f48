"""Acceptance criteria, one check per criterion.

Each ``criterion_*`` function returns ``(passed, detail)``.  Under pytest every
criterion is a test and a PASS/FAIL line per criterion is printed in the
terminal summary; ``python3 tests/test_acceptance.py`` prints the same lines.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pomdplab import bench, load_model, metrics, policy_value
from pomdplab.bench import DEFAULT_TOLERANCES as TOL

from conftest import ACCEPTANCE_LINES

EXACT_TOL = 1e-9  # exact-arithmetic comparisons
N_STDERR = 3.0  # Monte Carlo slack
WINDOW_TV = 0.05  # forward consistency
SEED_PASS = 18 / 20
FIXTURE = Path(__file__).parent / "fixtures" / "lower_bound_delta0.1_H2.json"


def _suite(checks):
    bad = [c for c in checks if not c.passed]
    margin = min(c.margin for c in checks)
    detail = f"{len(checks)} checks, min margin {margin:.3g}"
    if bad:
        detail += f"; first failure: {bad[0].name} (value {bad[0].value:.6g}, bound {bad[0].bound:.6g})"
    return not bad, detail


def _timed(fn, limit):
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    return ok and dt < limit, f"{detail}; {dt:.1f}s (limit {limit:.0f}s)"


def criterion_1():
    return _timed(lambda: _suite(bench.suite_belief_filter(range(50), TOL)), 60)


def criterion_2():
    return _suite(bench.suite_window_belief(range(50), TOL))


def criterion_3():
    return _suite(bench.suite_latent_dominance(range(50), TOL))


def criterion_4():
    return _suite(bench.suite_misspecification(range(50), TOL) + bench.suite_action_prediction(range(50), TOL))


def criterion_5():
    def run():
        checks = bench.suite_lower_bound((0.05, 0.1, 0.3), range(2, 7), (1, 2, 3), TOL)
        model, _ = load_model(FIXTURE)
        expert = bench.latent_optimal(model)
        tv = metrics.trajectory_tv(model, expert.policy, bench.greedy_observation_policy(model)).value
        checks.append(bench._close("shipped fixture: TV", tv, 0.19, EXACT_TOL))
        return _suite(checks)
    return _timed(run, 60)


def criterion_6():
    return _suite(bench.suite_deterministic_decodability(range(20), TOL, n=10_000))


def criterion_7():
    return _suite(bench.suite_stochasticity_tradeoff([0, 1, 2], TOL, delta=0.1, H=10))


def criterion_8():
    return _suite(bench.suite_contraction_decay(range(10), TOL, delta=0.05))


def criterion_9():
    return _suite(bench.suite_forward_consistency(range(10), {**TOL, "window_tv": WINDOW_TV,
                                                              "seed_pass": SEED_PASS}))


def criterion_10():
    return _suite(bench.suite_martingale((1e-3, 1e-4), range(1, 6), trials=100_000))


def criterion_11():
    return _suite(bench.suite_smoothing(range(10), TOL))


def criterion_12():
    import tempfile
    grid = dict(family="perturbedBlock", deltas=[0.0, 0.1], horizons=[3], S=[2], X=[4], A=[2],
                dynamics_modes=["deterministic", "uniformMixing"],
                algorithms=["forwardPopulation", "forwardFinite", "behaviorCloning",
                            "framestackPlan", "framestackQLearning"],
                windows=[1, 2], etas=[0.0], seeds=[0, 1], mode={"monteCarlo": 2000},
                n_samples=500, episodes=300)
    with tempfile.TemporaryDirectory() as tmp:
        texts = []
        for i, workers in enumerate((1, 1, 2)):
            g = bench.ExperimentGrid(**grid, output=str(Path(tmp) / f"run{i}.csv"), workers=workers)
            texts.append(bench.rows_to_csv(bench.run_grid(g), drop_timing=True))
    same = texts[0] == texts[1] == texts[2]
    return same, f"{texts[0].count(chr(10)) - 1} rows; serial and 2-worker reruns identical: {same}"


CRITERIA = {
    1: ("filter oracle", criterion_1),
    2: ("window-prior oracle", criterion_2),
    3: ("latent dominance", criterion_3),
    4: ("misspecification decompositions", criterion_4),
    5: ("lower-bound instance", criterion_5),
    6: ("deterministic-dynamics decodability", criterion_6),
    7: ("stochasticity trade-off", criterion_7),
    8: ("belief-contraction decay", criterion_8),
    9: ("forward consistency", criterion_9),
    10: ("martingale bound", criterion_10),
    11: ("smoothing", criterion_11),
    12: ("reproducibility", criterion_12),
}


def _line(k, ok, detail):
    return f"criterion {k}: {'PASS' if ok else 'FAIL'} {CRITERIA[k][0]} - {detail}"


@pytest.mark.acceptance
@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    ok, detail = CRITERIA[k][1]()
    ACCEPTANCE_LINES.append(_line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k][1]()
        results.append(ok)
        print(_line(k, ok, detail), flush=True)
    sys.exit(0 if all(results) else 1)
