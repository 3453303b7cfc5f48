"""Experiment grids, bound-verification suites and the martingale checker."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import metrics
from .belief import BeliefCache, approx_belief, enumerate_windows, true_belief, tv_dist
from .core import (DEFAULT_CAP, CapExceededError, HistoryPolicy, LatentPolicy, LayeredPomdp,
                   MonteCarlo, SwitchPolicy, WindowPolicy, enumerate_trajectories,
                   policy_value, trajectory_count_bound)
from .distill import behavior_cloning, forward_finite, forward_population
from .generators import (gen_lower_bound, gen_noisy_sensor, gen_perturbed_block,
                         gen_random_pomdp, gen_smoothing_toy)
from .planning import (compose_with_true_belief, framestack_plan, framestack_q_learning,
                       history_count_bound, latent_optimal, optimal_executable,
                       smoothed_latent_optimal)

log = logging.getLogger(__name__)

ALGORITHMS = ("latentExpert", "composeTrue", "forwardPopulation", "forwardFinite",
              "behaviorCloning", "framestackPlan", "framestackQLearning", "optimalExecutable")
FAMILIES = ("perturbedBlock", "noisySensor", "lowerBound")

CSV_COLUMNS = ("family", "delta", "H", "S", "X", "A", "dynamics_mode", "algorithm", "L", "eta",
               "seed", "mode", "n", "downgraded", "J", "stderr", "subopt_latent", "subopt_exec",
               "eps_dec", "eps_con", "ape", "wall_clock")


# --------------------------------------------------------------------------
# grids


@dataclass
class ExperimentGrid:
    """Declarative sweep; every list must be nonempty.

    ``mode`` is ``"exact"`` or ``{"monteCarlo": n}``.  Exact cells whose
    trajectory space exceeds ``cap`` fall back to Monte Carlo with
    ``fallback_n`` samples and are flagged in the ``downgraded`` column.
    """

    family: str = "perturbedBlock"
    deltas: list = field(default_factory=lambda: [0.1])
    horizons: list = field(default_factory=lambda: [3])
    S: list = field(default_factory=lambda: [2])
    X: list = field(default_factory=lambda: [4])
    A: list = field(default_factory=lambda: [2])
    dynamics_modes: list = field(default_factory=lambda: ["deterministic"])
    algorithms: list = field(default_factory=lambda: ["forwardPopulation", "framestackPlan"])
    windows: list = field(default_factory=lambda: [1])
    etas: list = field(default_factory=lambda: [0.0])
    seeds: list = field(default_factory=lambda: [0])
    mode: object = "exact"
    noise_style: str = "uniform"
    episodes: int = 2000
    n_samples: int = 1000
    fallback_n: int = 10000
    cap: int = DEFAULT_CAP
    output: str | None = None
    workers: int = 1

    def __post_init__(self):
        lists = ("deltas", "horizons", "S", "X", "A", "dynamics_modes", "algorithms", "windows",
                 "etas", "seeds")
        for name in lists:
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)) or len(value) == 0:
                raise ValueError(f"grid field {name!r} must be a nonempty list (nonempty lists required)")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentGrid":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown grid fields {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentGrid":
        return cls.from_json(json.loads(Path(path).read_text()))

    def cells(self) -> list:
        """Grid coordinates in canonical order."""
        inst = itertools.product(self.deltas, self.horizons, self.S, self.X, self.A,
                                 self.dynamics_modes, self.seeds)
        return [dict(delta=d, H=H, S=S, X=X, A=A, dynamics_mode=dm, seed=seed, algorithm=alg,
                     L=L, eta=eta)
                for (d, H, S, X, A, dm, seed) in inst
                for alg in self.algorithms for L in self.windows for eta in self.etas]

    def size(self) -> int:
        return len(self.cells())


def build_instance(grid: ExperimentGrid, cell: dict) -> LayeredPomdp:
    if grid.family == "lowerBound":
        return gen_lower_bound(cell["delta"], cell["H"])
    if grid.family == "noisySensor":
        return gen_noisy_sensor(cell["S"], cell["H"], cell["delta"], cell["dynamics_mode"],
                                A=cell["A"], seed=cell["seed"])[0]
    return gen_perturbed_block(cell["S"], cell["X"], cell["A"], cell["H"], cell["delta"],
                               cell["dynamics_mode"], grid.noise_style, cell["seed"])[0]


def _cell_seed(cell: dict, salt: int) -> int:
    return int(np.random.SeedSequence([int(cell["seed"]), salt]).generate_state(1)[0])


def make_policy(model: LayeredPomdp, algorithm: str, expert, L: int = 1, n_samples: int = 1000,
                episodes: int = 2000, seed: int = 0, cap: int = DEFAULT_CAP):
    """Build the policy an algorithm name refers to (``expert`` is a latent solution)."""
    if algorithm == "latentExpert":
        return expert.policy
    if algorithm == "composeTrue":
        return compose_with_true_belief(model, expert)
    if algorithm == "forwardPopulation":
        return forward_population(model, expert, L)
    if algorithm == "forwardFinite":
        return forward_finite(model, expert, L, n_samples, seed)
    if algorithm == "behaviorCloning":
        return behavior_cloning(model, expert, L, n_samples, seed=seed)
    if algorithm == "framestackPlan":
        return framestack_plan(model, L, cap)
    if algorithm == "framestackQLearning":
        return framestack_q_learning(model, L, episodes, seed=seed)
    if algorithm == "optimalExecutable":
        return optimal_executable(model, cap)[0]
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _build_policy(grid, model, cell, expert):
    salt = ALGORITHMS.index(cell["algorithm"]) + 1
    return make_policy(model, cell["algorithm"], expert, cell["L"], grid.n_samples, grid.episodes,
                       _cell_seed(cell, salt), grid.cap)


def _fmt(x) -> str:
    return repr(float(x))


def run_cell(grid: ExperimentGrid, cell: dict) -> dict:
    t0 = time.perf_counter()
    model = build_instance(grid, cell)
    expert = smoothed_latent_optimal(model, cell["eta"])
    policy = _build_policy(grid, model, cell, expert)
    j_latent = latent_optimal(model).value
    j_exec = optimal_executable(model, grid.cap)[1] if history_count_bound(model) <= grid.cap else None

    mode = grid.mode
    if isinstance(mode, dict):
        mode = MonteCarlo(int(mode["monteCarlo"]), _cell_seed(cell, 100))
    downgraded = False
    if mode == "exact" and trajectory_count_bound(model) > grid.cap:
        mode = MonteCarlo(grid.fallback_n, _cell_seed(cell, 100))
        downgraded = True

    def measure(mode):
        J = policy_value(model, policy, mode, grid.cap)
        H, L = model.horizon, cell["L"]
        dec = [metrics.decodability_error(model, policy, h, mode, grid.cap).value for h in range(H)]
        con = [metrics.belief_contraction_error(model, policy, h, L, None, mode, grid.cap).value
               for h in range(H)]
        ape = [metrics.action_prediction_error(model, expert, policy, h, mode, grid.cap).value
               for h in range(H)]
        return J, dec, con, ape

    try:
        J, dec, con, ape = measure(mode)
    except CapExceededError:
        mode = MonteCarlo(grid.fallback_n, _cell_seed(cell, 100))
        downgraded = True
        J, dec, con, ape = measure(mode)

    row = {"family": grid.family, **{k: cell[k] for k in ("delta", "H", "S", "X", "A",
                                                           "dynamics_mode", "algorithm", "L",
                                                           "eta", "seed")}}
    for k in ("delta", "eta"):
        row[k] = _fmt(row[k])
    row.update({
        "mode": "exact" if mode == "exact" else "monteCarlo",
        "n": 0 if mode == "exact" else mode.n,
        "downgraded": int(downgraded),
        "J": _fmt(J.value),
        "stderr": _fmt(J.stderr),
        "subopt_latent": _fmt(j_latent - J.value),
        "subopt_exec": "" if j_exec is None else _fmt(j_exec - J.value),
        "eps_dec": ";".join(_fmt(v) for v in dec),
        "eps_con": ";".join(_fmt(v) for v in con),
        "ape": ";".join(_fmt(v) for v in ape),
        "wall_clock": f"{time.perf_counter() - t0:.4f}",
    })
    return row


def _run_cell_args(args):
    return run_cell(*args)


def run_grid(grid: ExperimentGrid) -> list:
    """Evaluate every cell; rows come back (and are written) in canonical order."""
    cells = grid.cells()
    log.info("grid size: %d cells", len(cells))
    if grid.workers > 1:
        with ProcessPoolExecutor(grid.workers) as pool:
            rows = list(pool.map(_run_cell_args, [(grid, c) for c in cells]))
    else:
        rows = [run_cell(grid, c) for c in cells]
    if grid.output:
        Path(grid.output).write_text(rows_to_csv(rows))
    return rows


def rows_to_csv(rows: list, drop_timing: bool = False) -> str:
    cols = [c for c in CSV_COLUMNS if not (drop_timing and c == "wall_clock")]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# verification suites

DEFAULT_TOLERANCES = {"exact": 1e-9, "stderr": 3.0, "window_tv": 0.05, "seed_pass": 18 / 20}


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool

    @property
    def margin(self) -> float:
        return float(self.bound - self.value)

    def to_json(self):
        d = asdict(self)
        d["margin"] = self.margin
        for k in ("value", "bound", "margin"):
            if not np.isfinite(d[k]):
                d[k] = repr(d[k])
        return d


def _leq(name, value, bound, tol=0.0) -> Check:
    return Check(name, float(value), float(bound), bool(value <= bound + tol))


def random_window_policy(model: LayeredPomdp, L: int, include_actions: bool, rng,
                         sparsity: float = 0.3) -> WindowPolicy:
    """Window policy with a random (sparse) row for every possible key."""
    table = []
    for h in range(model.horizon):
        n_obs = min(h + 1, L)
        n_act = min(h, L) if include_actions else 0
        obs_ranges = [range(model.n_obs[k]) for k in range(h + 1 - n_obs, h + 1)]
        act_ranges = [range(model.n_actions[k]) for k in range(h - n_act, h)]
        A = model.n_actions[h]
        rows = {}
        for ow in itertools.product(*obs_ranges):
            for aw in itertools.product(*act_ranges):
                r = rng.dirichlet(np.ones(A))
                r = np.where(rng.random(A) < sparsity, 0.0, r)
                if r.sum() == 0:
                    r[rng.integers(A)] = 1.0
                rows[(ow, aw)] = r / r.sum()
        table.append(rows)
    return WindowPolicy(L, include_actions, table, model.n_actions)


def random_latent_policy(model: LayeredPomdp, rng, deterministic: bool) -> LatentPolicy:
    if deterministic:
        return LatentPolicy.from_actions(
            [rng.integers(0, A, size=S) for S, A in zip(model.n_states, model.n_actions)],
            model.n_actions)
    return LatentPolicy([rng.dirichlet(np.ones(A), size=S)
                         for S, A in zip(model.n_states, model.n_actions)])


def _group_conditionals(table, h, S):
    """``{(obs, acts): P(s_h = . | obs, acts)}`` from an enumerated table."""
    groups = {}
    for i in range(len(table)):
        key = (tuple(int(v) for v in table.obs[i, :h + 1]), tuple(int(v) for v in table.actions[i, :h]))
        vec = groups.get(key)
        if vec is None:
            vec = groups[key] = np.zeros(S)
        vec[table.states[i, h]] += table.probs[i]
    return {k: v / v.sum() for k, v in groups.items()}


def suite_belief_filter(seeds, tol, filter_fn=None):
    filter_fn = filter_fn or true_belief
    checks = []
    for seed in seeds:
        model = gen_random_pomdp(seed)
        rng = np.random.default_rng([seed, 11])
        policy = random_window_policy(model, int(rng.integers(1, 3)), bool(rng.integers(2)), rng)
        table = enumerate_trajectories(model, policy)
        worst = 0.0
        for h in range(model.horizon):
            for (obs, acts), cond in _group_conditionals(table, h, model.n_states[h]).items():
                try:
                    b = filter_fn(model, obs, acts).probs
                except ValueError:
                    worst = np.inf
                    continue
                worst = max(worst, float(np.abs(b - cond).max()))
        checks.append(_leq(f"seed {seed}: max |filter - conditional|", worst, tol["exact"]))
    return checks


def suite_window_belief(seeds, tol):
    checks = []
    for seed in seeds:
        model = gen_random_pomdp(seed)
        rng = np.random.default_rng([seed, 12])
        base = random_window_policy(model, int(rng.integers(1, 3)), bool(rng.integers(2)), rng)
        L = int(rng.integers(1, 3))
        worst = 0.0
        for h in range(L, model.horizon):
            uniform = WindowPolicy.uniform(model, L, True)
            policy = SwitchPolicy(base, uniform, h - L)
            table = enumerate_trajectories(model, policy)
            start = h - L
            occ = np.zeros(model.n_states[start])
            np.add.at(occ, table.states[:, start], table.probs)
            groups = {}
            for i in range(len(table)):
                key = (tuple(int(v) for v in table.obs[i, start + 1:h + 1]),
                       tuple(int(v) for v in table.actions[i, start:h]))
                vec = groups.setdefault(key, np.zeros(model.n_states[h]))
                vec[table.states[i, h]] += table.probs[i]
            for (ow, aw), vec in groups.items():
                b = approx_belief(model, h, L, ow, aw, occ).probs
                worst = max(worst, float(np.abs(b - vec / vec.sum()).max()))
        checks.append(_leq(f"seed {seed}: max |window belief - conditional|", worst, tol["exact"]))
    return checks


def suite_latent_dominance(seeds, tol):
    checks = []
    for seed in seeds:
        model = gen_random_pomdp(seed)
        _, j_star = optimal_executable(model)
        checks.append(_leq(f"seed {seed}: J(executable optimum) <= J(latent optimum)",
                           j_star, latent_optimal(model).value, tol["exact"]))
    return checks


def _surrogate_belief(model, seed, mix):
    """History-dependent belief forgery: true belief blended with a hashed random vector."""
    beliefs = BeliefCache(model)

    def fn(obs, acts):
        h = len(obs) - 1
        rng = np.random.default_rng([seed, h, *obs, *acts])
        noise = rng.dirichlet(np.ones(model.n_states[h]))
        return (1 - mix) * beliefs(obs, acts).probs + mix * noise
    return fn, beliefs


def _misspec_instance(seed):
    model = gen_random_pomdp(seed, max_product=3000)
    rng = np.random.default_rng([seed, 13])
    expert = random_latent_policy(model, rng, deterministic=bool(rng.integers(2)))
    btil, beliefs = _surrogate_belief(model, seed, float(rng.uniform(0, 1)))
    composed_true = compose_with_true_belief(model, expert)
    forged = HistoryPolicy(lambda h, o, a: btil(o, a) @ expert.act[h], model.n_actions)
    lhs = metrics.trajectory_tv(model, expert, forged).value
    return model, expert, btil, beliefs, composed_true, forged, lhs


def suite_misspecification(seeds, tol):
    checks = []
    for seed in seeds:
        model, expert, btil, beliefs, pi, forged, lhs = _misspec_instance(seed)
        rhs_forged = rhs_true = 0.0
        for h in range(model.horizon):
            dec = metrics.decodability_error(model, pi, h, beliefs=beliefs).value

            def gap(o, a):
                return float(np.abs(beliefs(o, a).probs - btil(o, a)).sum())
            rhs_forged += 2 * dec + metrics.history_expectation(model, forged, h, gap).value
            rhs_true += 2 * dec + metrics.history_expectation(model, pi, h, gap).value
        checks.append(_leq(f"seed {seed}: TV <= sum 2 eps_dec + E^forged|b - b~|", lhs, rhs_forged,
                           tol["exact"]))
        checks.append(_leq(f"seed {seed}: TV <= sum 2 eps_dec + E^composed|b - b~|", lhs, rhs_true,
                           tol["exact"]))
    return checks


def suite_action_prediction(seeds, tol):
    checks = []
    for seed in seeds:
        model, expert, btil, beliefs, pi, forged, lhs = _misspec_instance(seed)
        rhs = 0.0
        for h in range(model.horizon):
            ape = metrics.action_prediction_error(model, expert, pi, h, beliefs=beliefs).value

            def gap(o, a, h=h):
                return float(np.abs((beliefs(o, a).probs - btil(o, a)) @ expert.act[h]).sum())
            rhs += 2 * ape + metrics.history_expectation(model, pi, h, gap).value
        checks.append(_leq(f"seed {seed}: TV <= sum 2 eps_apx + E|expert.b - expert.b~|", lhs, rhs,
                           tol["exact"]))
    return checks


def suite_deterministic_decodability(seeds, tol, deltas=(0.05, 0.1), n=10_000):
    checks = []
    for seed in seeds:
        delta = deltas[seed % len(deltas)]
        model, _ = gen_perturbed_block(3, 6, 2, 5, delta, "deterministic", "randomDirichlet", seed)
        rng = np.random.default_rng([seed, 14])
        policy = random_window_policy(model, 1, False, rng)
        for h in range(model.horizon):
            est = metrics.decodability_error(model, policy, h, MonteCarlo(n, seed))
            checks.append(_leq(f"seed {seed} delta {delta} h {h}: eps_dec - 3 se <= delta",
                               est.value - tol["stderr"] * est.stderr, delta))
    return checks


def suite_lower_bound(deltas=(0.05, 0.1, 0.3), horizons=range(2, 7), windows=(1, 2, 3), tol=None):
    tol = tol or DEFAULT_TOLERANCES
    checks = []
    for delta in deltas:
        for H in horizons:
            model = gen_lower_bound(delta, H)
            expert = latent_optimal(model)
            greedy = greedy_observation_policy(model)
            tag = f"delta {delta} H {H}"
            tv = metrics.trajectory_tv(model, expert.policy, greedy).value
            checks.append(_close(f"{tag}: TV(latent, greedy)", tv, 1 - (1 - delta) ** H, tol["exact"]))
            checks.append(_close(f"{tag}: J(latent)", policy_value(model, expert.policy).value, 1.0,
                                 tol["exact"]))
            checks.append(_close(f"{tag}: J(greedy)", policy_value(model, greedy).value, 1 - delta,
                                 tol["exact"]))
            for L in windows:
                j = policy_value(model, forward_population(model, expert, L)).value
                checks.append(_close(f"{tag} L {L}: J(forward)", j, (1 - delta) ** 2 + delta ** 2,
                                     tol["exact"]))
    return checks


def _close(name, value, target, tol) -> Check:
    gap = abs(value - target)
    return Check(name, float(gap), float(tol), bool(gap <= tol))


def greedy_observation_policy(model: LayeredPomdp) -> WindowPolicy:
    """Plays ``a_h = x_h``; needs matching observation and action sets."""
    table = [{((x,), ()): np.eye(model.n_actions[h])[x] for x in range(model.n_obs[h])}
             for h in range(model.horizon)]
    return WindowPolicy(1, False, table, model.n_actions)


def suite_stochasticity_tradeoff(seeds, tol, delta=0.1, H=10, windows=(1, 2, 3)):
    """Frame-stacked planning beats Forward under uniform mixing, ties when decodable."""
    checks = []
    mixing = [("lower bound", gen_lower_bound(delta, H))]
    mixing += [(f"mixing seed {s}", gen_perturbed_block(2, 4, 2, H, delta, "uniformMixing", "uniform", s)[0])
               for s in seeds]
    for name, model in mixing:
        expert = latent_optimal(model)
        for L in windows:
            gap = (policy_value(model, framestack_plan(model, L)).value
                   - policy_value(model, forward_population(model, expert, L)).value)
            checks.append(Check(f"{name} L {L}: J(framestack) - J(forward) > 0", float(-gap), 0.0,
                                bool(gap > tol["exact"])))
    for s in seeds:
        model = gen_perturbed_block(2, 4, 2, H, 0.0, "deterministic", "uniform", s)[0]
        expert = latent_optimal(model)
        for L in windows:
            gap = (policy_value(model, framestack_plan(model, L)).value
                   - policy_value(model, forward_population(model, expert, L)).value)
            checks.append(_close(f"decodable seed {s} L {L}: |J(framestack) - J(forward)|", gap, 0.0,
                                 tol["exact"]))
    return checks


def suite_contraction_decay(seeds, tol, delta=0.05, H=6, windows=(1, 2, 3, 4), n=10_000):
    """Window-belief error shrinks with the window; vanishes under uniform mixing."""
    checks = []
    for seed in seeds:
        model, _ = gen_perturbed_block(3, 6, 2, H, delta, "stochastic", "randomDirichlet", seed)
        policy = WindowPolicy.uniform(model)
        h = H - 1
        ests = [metrics.belief_contraction_error(model, policy, h, L, mode=MonteCarlo(n, seed))
                for L in windows]
        for (L0, e0), (L1, e1) in zip(zip(windows, ests), zip(windows[1:], ests[1:])):
            slack = tol["stderr"] * float(np.hypot(e0.stderr, e1.stderr))
            checks.append(_leq(f"seed {seed}: eps_con(L={L1}) <= eps_con(L={L0}) + 3 se",
                               e1.value, e0.value + slack))
    for seed in seeds:
        model, _ = gen_perturbed_block(3, 6, 2, 4, delta, "uniformMixing", "randomDirichlet", seed)
        policy = WindowPolicy.uniform(model)
        worst = max(metrics.belief_contraction_error(model, policy, h, L).value
                    for L in (1, 2) for h in range(model.horizon))
        checks.append(_leq(f"uniform mixing seed {seed}: max eps_con", worst, 1e-12))
    return checks


def forward_window_tv(model, expert, L, n, seed) -> float:
    """Largest TV between sampled and exact Forward rows over reachable windows."""
    pop = forward_population(model, expert, L)
    fin = forward_finite(model, expert, L, n, seed)
    worst = 0.0
    for h in range(model.horizon):
        for key, row in pop.table[h].items():
            worst = max(worst, tv_dist(row, fin.action_probs(h, *key)))
    return worst


def forward_consistency_instance(seed):
    """Tiny noisy-sensor instance where every window is reasonably likely."""
    rng = np.random.default_rng([seed, 15])
    delta = float(rng.uniform(0.1, 0.3))
    model, _ = gen_noisy_sensor(2, 3, delta, "stochastic", A=2, seed=seed)
    return model


def suite_forward_consistency(seeds, tol, n_seeds=20, n=10_000, L=1):
    checks = []
    for seed in seeds:
        model = forward_consistency_instance(seed)
        expert = latent_optimal(model)
        tvs = [forward_window_tv(model, expert, L, n, 1000 * seed + k) for k in range(n_seeds)]
        frac = float(np.mean([t <= tol["window_tv"] for t in tvs]))
        checks.append(Check(f"instance {seed}: fraction of seeds with window TV <= "
                            f"{tol['window_tv']} (worst {max(tvs):.4f})",
                            -frac, -tol["seed_pass"], bool(frac >= tol["seed_pass"])))
    return checks


def suite_smoothing(seeds, tol):
    checks = []
    for seed in seeds:
        toy = gen_smoothing_toy(seed)
        plain, smooth = latent_optimal(toy), smoothed_latent_optimal(toy, 1.0, "ball")
        d_plain, d_smooth = forward_population(toy, plain, 1), forward_population(toy, smooth, 1)
        ape_plain = metrics.action_prediction_error(toy, plain, d_plain, 0).value
        ape_smooth = metrics.action_prediction_error(toy, smooth, d_smooth, 0).value
        checks.append(Check(f"toy {seed}: ape(smoothed) < ape(plain)", ape_smooth, ape_plain,
                            bool(ape_smooth < ape_plain)))
        j_plain, j_smooth = policy_value(toy, d_plain).value, policy_value(toy, d_smooth).value
        checks.append(_leq(f"toy {seed}: J(distilled plain) <= J(distilled smoothed)", j_plain,
                           j_smooth, tol["exact"]))
        toy0 = gen_smoothing_toy(seed, delta=0.0)
        p0, s0 = latent_optimal(toy0), smoothed_latent_optimal(toy0, 1.0, "ball")
        gap = (policy_value(toy0, forward_population(toy0, s0, 1)).value
               - policy_value(toy0, forward_population(toy0, p0, 1)).value)
        checks.append(_close(f"toy {seed} decodable: distilled value gap", gap, 0.0, tol["exact"]))
    return checks


# --------------------------------------------------------------------------
# martingale


def martingale_check(eps_list, L_list, S: float = 1.0, trials: int = 100_000, seed: int = 0,
                     n_stderr: float = 3.0) -> dict:
    """Simulate ``X_{n+1} = eps X_n`` w.p. ``1 - eps`` (else unchanged), ``X_0 = S``.

    Checks ``E[min(X_L, S)] + n_stderr * se <= 2 * 3^L * eps^(L/3) * S``.
    """
    limit = 3.0 ** -6
    for eps in eps_list:
        if not 0 < eps < limit:
            raise ValueError(f"eps={eps} violates the precondition 0 < eps < 3^-6")
    rows = []
    for i, eps in enumerate(eps_list):
        for L in L_list:
            rng = np.random.default_rng([seed, i, L])
            shrinks = rng.binomial(L, 1 - eps, size=trials)
            x = np.minimum(S * eps ** shrinks.astype(float), S)
            est = float(x.mean())
            se = float(x.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
            bound = 2 * 3.0 ** L * eps ** (L / 3) * S
            rows.append({"eps": eps, "L": L, "estimate": est, "stderr": se,
                         "closed_form": S * (eps * (2 - eps)) ** L, "bound": bound,
                         "margin": bound - (est + n_stderr * se),
                         "passed": bool(est + n_stderr * se <= bound)})
    return {"checks": rows, "passed": all(r["passed"] for r in rows)}


def suite_martingale(eps_list=(1e-3, 1e-4), L_list=range(1, 6), trials=100_000, seed=0):
    rep = martingale_check(list(eps_list), list(L_list), 1.0, trials, seed)
    return [Check(f"eps {r['eps']} L {r['L']}: estimate + 3 se <= bound",
                  r["estimate"] + 3 * r["stderr"], r["bound"], r["passed"]) for r in rep["checks"]]


# --------------------------------------------------------------------------

SUITES = {
    "belief_filter": lambda seeds, tol, f: suite_belief_filter(seeds, tol, f),
    "window_belief": lambda seeds, tol, f: suite_window_belief(seeds, tol),
    "latent_dominance": lambda seeds, tol, f: suite_latent_dominance(seeds, tol),
    "misspecification": lambda seeds, tol, f: suite_misspecification(seeds, tol),
    "action_prediction": lambda seeds, tol, f: suite_action_prediction(seeds, tol),
    "deterministic_decodability": lambda seeds, tol, f: suite_deterministic_decodability(seeds, tol),
    "lower_bound": lambda seeds, tol, f: suite_lower_bound(tol=tol),
    "stochasticity_tradeoff": lambda seeds, tol, f: suite_stochasticity_tradeoff(seeds[:3], tol),
    "contraction_decay": lambda seeds, tol, f: suite_contraction_decay(seeds, tol),
    "forward_consistency": lambda seeds, tol, f: suite_forward_consistency(seeds, tol),
    "smoothing": lambda seeds, tol, f: suite_smoothing(seeds, tol),
    "martingale": lambda seeds, tol, f: suite_martingale(seed=seeds[0] if seeds else 0),
}


def verify_bounds(suites=None, seeds=range(10), tolerances: dict | None = None,
                  filter_fn: Callable | None = None) -> dict:
    """Run the named suites; ``filter_fn`` replaces the filter under test in ``belief_filter``."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    names = list(SUITES) if suites in (None, "all") else list(suites)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suites {unknown}")
    seeds = list(seeds)
    report = {"suites": {}, "tolerances": tol}
    for name in names:
        t0 = time.perf_counter()
        checks = SUITES[name](seeds, tol, filter_fn)
        report["suites"][name] = {
            "passed": all(c.passed for c in checks),
            "n_checks": len(checks),
            "min_margin": min((c.margin for c in checks), default=float("inf")),
            "seconds": round(time.perf_counter() - t0, 3),
            "checks": [c.to_json() for c in checks],
        }
    report["passed"] = all(s["passed"] for s in report["suites"].values())
    return report
