"""Command-line entry point: ``pomdplab <subcommand> [--config file.json] [flags]``.

Every flag can also come from the JSON config (keys use the flag's long name
with dashes replaced by underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, metrics
from .belief import approx_belief, true_belief
from .core import MonteCarlo, policy_value
from .generators import (gen_lower_bound, gen_noisy_sensor, gen_perturbed_block, gen_random_pomdp,
                         gen_smoothing_toy, load_model, save_model)
from .planning import latent_optimal, optimal_executable, smoothed_latent_optimal

STOCHASTIC = {"gen", "distill", "martingale"}
SAMPLED = {"forwardFinite", "behaviorCloning", "framestackQLearning"}


def _ints(text):
    if text is None or text == "":
        return ()
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(","))


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",")]


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _mode(args):
    if args.mode == "exact":
        return "exact"
    if args.seed is None:
        raise SystemExit("--seed is required for Monte Carlo evaluation")
    return MonteCarlo(args.n, args.seed)


def _expert(model, args):
    eta = getattr(args, "eta", 0.0) or 0.0
    return smoothed_latent_optimal(model, eta, getattr(args, "noise", "uniform") or "uniform")


def cmd_gen(args):
    fam = args.family
    meta = None
    if fam == "lowerBound":
        model = gen_lower_bound(args.delta, args.H)
    elif fam == "perturbedBlock":
        model, meta = gen_perturbed_block(args.S, args.X, args.A, args.H, args.delta,
                                          args.dynamics, args.noise_style, args.seed)
    elif fam == "noisySensor":
        model, meta = gen_noisy_sensor(args.S, args.H, args.delta, args.dynamics, A=args.A,
                                       seed=args.seed)
    elif fam == "smoothingToy":
        model = gen_smoothing_toy(args.seed, args.delta)
    else:
        model = gen_random_pomdp(args.seed)
    save_model(model, args.out, meta)
    print(f"wrote {args.out}: H={model.horizon} S={list(model.n_states)} "
          f"X={list(model.n_obs)} A={list(model.n_actions)}")
    return 0


def cmd_filter(args):
    model, _ = load_model(args.model)
    obs, acts = _ints(args.obs), _ints(args.acts)
    h = len(obs) - 1
    if args.window:
        L = args.window
        prior = _floats(args.prior) if args.prior else None
        b = approx_belief(model, h, L, obs[max(0, len(obs) - L):] if h >= L else obs,
                          acts[max(0, len(acts) - L):] if h >= L else acts, prior)
    else:
        b = true_belief(model, obs, acts)
    _emit({"step": b.step, "belief": b.probs})
    return 0


def _policy_summary(policy, model):
    table = getattr(policy, "table", None)
    if table is None:
        return None
    return [{f"{list(k[0])}|{list(k[1])}": row for k, row in t.items()} for t in table]


def cmd_plan(args):
    model, _ = load_model(args.model)
    out = {"algorithm": args.algorithm}
    if args.algorithm in ("latent", "smoothed"):
        sol = latent_optimal(model) if args.algorithm == "latent" else _expert(model, args)
        out["J_model"] = sol.value
        out["J"] = policy_value(model, sol.policy).value
        out["actions"] = [sol.policy.greedy_actions(h) for h in range(model.horizon)]
    elif args.algorithm == "optimalExecutable":
        _, J = optimal_executable(model)
        out["J"] = J
    else:
        policy = bench.make_policy(model, args.algorithm, None, args.window,
                                   episodes=args.episodes, seed=args.seed or 0)
        out["J"] = policy_value(model, policy).value
        out["table"] = _policy_summary(policy, model)
    _emit(out, args.out)
    return 0


def cmd_distill(args):
    model, _ = load_model(args.model)
    expert = _expert(model, args)
    policy = bench.make_policy(model, args.method, expert, args.window, args.n, seed=args.seed)
    _emit({"method": args.method, "L": args.window, "J": policy_value(model, policy).value,
           "J_expert": policy_value(model, expert.policy).value,
           "table": _policy_summary(policy, model)}, args.out)
    return 0


def cmd_eval(args):
    model, _ = load_model(args.model)
    expert = _expert(model, args)
    policy = bench.make_policy(model, args.algorithm, expert, args.window, args.n,
                               args.episodes, args.seed or 0)
    mode = _mode(args)
    H = model.horizon
    J = policy_value(model, policy, mode)
    out = {
        "algorithm": args.algorithm, "L": args.window, "mode": J.mode, "n": J.n,
        "J": J.value, "stderr": J.stderr,
        "subopt_latent": latent_optimal(model).value - J.value,
        "eps_dec": [metrics.decodability_error(model, policy, h, mode).value for h in range(H)],
        "eps_con": [metrics.belief_contraction_error(model, policy, h, args.window, None, mode).value
                    for h in range(H)],
        "ape": [metrics.action_prediction_error(model, expert, policy, h, mode).value
                for h in range(H)],
    }
    _emit(out, args.out)
    return 0


def cmd_grid(args):
    doc = json.loads(Path(args.grid).read_text())
    if args.output:
        doc["output"] = args.output
    if args.workers:
        doc["workers"] = args.workers
    grid = bench.ExperimentGrid.from_json(doc)
    print(f"grid size: {grid.size()} cells", file=sys.stderr)
    rows = bench.run_grid(grid)
    if not grid.output:
        sys.stdout.write(bench.rows_to_csv(rows))
    return 0


def cmd_verify(args):
    seeds = range(args.seeds) if isinstance(args.seeds, int) else _ints(args.seeds)
    tol = json.loads(args.tol) if isinstance(args.tol, str) else (args.tol or None)
    report = bench.verify_bounds(args.suite or None, seeds, tol)
    _emit(report, args.out)
    for name, s in report["suites"].items():
        print(f"{'PASS' if s['passed'] else 'FAIL'} {name} ({s['n_checks']} checks, "
              f"min margin {s['min_margin']:.3g})", file=sys.stderr)
    return 0 if report["passed"] else 1


def cmd_martingale(args):
    try:
        report = bench.martingale_check(_floats(args.eps), list(_ints(args.L)), args.S,
                                        args.trials, args.seed)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    _emit(report, args.out)
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pomdplab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", help="JSON file with default values for the flags below")
        sp.set_defaults(func=fn)
        return sp

    g = add("gen", cmd_gen, "generate a model and write it as JSON")
    g.add_argument("--family", default=None,
                   choices=["perturbedBlock", "noisySensor", "lowerBound", "smoothingToy", "random"])
    g.add_argument("--S", type=int)
    g.add_argument("--X", type=int)
    g.add_argument("--A", type=int)
    g.add_argument("--H", type=int)
    g.add_argument("--delta", type=float)
    g.add_argument("--dynamics", choices=["deterministic", "stochastic", "uniformMixing"])
    g.add_argument("--noise-style", choices=["uniform", "randomDirichlet"])
    g.add_argument("--seed", type=int)
    g.add_argument("--out")

    f = add("filter", cmd_filter, "print the true (or windowed) belief for a history")
    f.add_argument("--model")
    f.add_argument("--obs", help="comma-separated observations x_0..x_h")
    f.add_argument("--acts", help="comma-separated actions a_0..a_{h-1}")
    f.add_argument("--window", type=int, help="use the L-step windowed belief")
    f.add_argument("--prior", help="comma-separated window-start prior (default uniform)")

    pl = add("plan", cmd_plan, "compute a planner's policy and its exact value")
    pl.add_argument("--model")
    pl.add_argument("--algorithm", choices=["latent", "smoothed", "optimalExecutable",
                                            "framestackPlan", "framestackQLearning"])
    pl.add_argument("--window", type=int)
    pl.add_argument("--eta", type=float)
    pl.add_argument("--noise", choices=["uniform", "ball"])
    pl.add_argument("--episodes", type=int)
    pl.add_argument("--seed", type=int)
    pl.add_argument("--out")

    d = add("distill", cmd_distill, "distill the (optionally smoothed) latent expert")
    d.add_argument("--model")
    d.add_argument("--method", choices=["forwardPopulation", "forwardFinite", "behaviorCloning"])
    d.add_argument("--window", type=int)
    d.add_argument("--n", type=int, help="samples per step (Forward) or trajectories (BC)")
    d.add_argument("--eta", type=float)
    d.add_argument("--noise", choices=["uniform", "ball"])
    d.add_argument("--seed", type=int)
    d.add_argument("--out")

    e = add("eval", cmd_eval, "evaluate an algorithm's policy: value and error functionals")
    e.add_argument("--model")
    e.add_argument("--algorithm", choices=list(bench.ALGORITHMS))
    e.add_argument("--window", type=int)
    e.add_argument("--eta", type=float)
    e.add_argument("--noise", choices=["uniform", "ball"])
    e.add_argument("--mode", choices=["exact", "mc"])
    e.add_argument("--n", type=int, help="Monte Carlo samples (also used by sampled algorithms)")
    e.add_argument("--episodes", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")

    gr = add("grid", cmd_grid, "run an experiment grid and write CSV")
    gr.add_argument("--grid", help="grid JSON file")
    gr.add_argument("--output")
    gr.add_argument("--workers", type=int)

    v = add("verify", cmd_verify, "run bound-verification suites; exit 0 only if all pass")
    v.add_argument("--suite", action="append", choices=list(bench.SUITES))
    v.add_argument("--seeds", help="number of instance seeds, or a comma-separated list")
    v.add_argument("--tol", help='JSON tolerance overrides, e.g. {"exact": 1e-9}')
    v.add_argument("--out")

    m = add("martingale", cmd_martingale, "check the supermartingale tail bound by simulation")
    m.add_argument("--eps", help="comma-separated epsilons in (0, 3^-6)")
    m.add_argument("--L", help="comma-separated step counts")
    m.add_argument("--S", type=float)
    m.add_argument("--trials", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--out")
    return p


DEFAULTS = {
    "gen": {"family": "perturbedBlock", "S": 2, "X": 4, "A": 2, "H": 3, "delta": 0.1,
            "dynamics": "stochastic", "noise_style": "uniform", "out": "model.json"},
    "filter": {"acts": ""},
    "plan": {"algorithm": "latent", "window": 1, "eta": 0.0, "noise": "uniform", "episodes": 2000},
    "distill": {"method": "forwardPopulation", "window": 1, "n": 1000, "eta": 0.0,
                "noise": "uniform"},
    "eval": {"algorithm": "forwardPopulation", "window": 1, "eta": 0.0, "noise": "uniform",
             "mode": "exact", "n": 10000, "episodes": 2000},
    "grid": {},
    "verify": {"seeds": "10"},
    "martingale": {"eps": "0.001,0.0001", "L": "1,2,3,4,5", "S": 1.0, "trials": 100000},
}

REQUIRED = {"filter": ["model", "obs"], "plan": ["model"], "distill": ["model"], "eval": ["model"],
            "grid": ["grid"]}


def resolve(args) -> argparse.Namespace:
    """Fill unset flags from the config file, then from built-in defaults."""
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    for key, val in {**DEFAULTS[args.command], **cfg}.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    for key in REQUIRED.get(args.command, []):
        if getattr(args, key, None) is None:
            raise SystemExit(f"pomdplab {args.command}: --{key} is required")
    needs_seed = args.command in STOCHASTIC and not (
        args.command == "gen" and args.family == "lowerBound")
    if args.command == "distill" and args.method == "forwardPopulation":
        needs_seed = False
    if args.command == "eval":
        needs_seed = args.mode == "mc" or args.algorithm in SAMPLED
    if args.command == "plan":
        needs_seed = args.algorithm == "framestackQLearning"
    if needs_seed and args.seed is None:
        raise SystemExit(f"pomdplab {args.command}: --seed is required")
    if args.command == "verify" and isinstance(args.seeds, str) and "," not in args.seeds:
        args.seeds = int(args.seeds)
    return args


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(resolve(args))


if __name__ == "__main__":
    sys.exit(main())
