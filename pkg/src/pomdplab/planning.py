"""Latent experts, belief-composed executable policies and frame-stacked baselines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .belief import BeliefCache, approx_belief, enumerate_windows
from .core import (DEFAULT_CAP, CapExceededError, HistoryPolicy, LatentPolicy, LayeredPomdp,
                   WindowPolicy, _tail)

TIE_TOL = 1e-12


def argmax_lowest(q: np.ndarray, tol: float = TIE_TOL) -> int:
    """Index of the maximum; near-ties go to the lowest index."""
    return int(np.flatnonzero(q >= q.max() - tol)[0])


def _one_hot(i: int, n: int) -> np.ndarray:
    row = np.zeros(n)
    row[i] = 1.0
    return row


@dataclass(frozen=True, eq=False)
class LatentSolution:
    """Optimal latent policy with its value tables ``V[h][s]`` and ``Q[h][s, a]``."""

    policy: LatentPolicy
    V: tuple
    Q: tuple
    init: np.ndarray

    @property
    def value(self) -> float:
        return float(self.init @ self.V[0])


def _backward(init, trans, reward) -> LatentSolution:
    H = len(reward)
    V = [None] * H
    Q = [None] * H
    acts = [None] * H
    nxt = None
    for h in reversed(range(H)):
        q = np.array(reward[h], dtype=float)
        if nxt is not None:
            q = q + trans[h] @ nxt
        acts[h] = np.array([argmax_lowest(row) for row in q])
        V[h] = q[np.arange(q.shape[0]), acts[h]]
        Q[h] = q
        nxt = V[h]
    policy = LatentPolicy.from_actions(acts, [r.shape[1] for r in reward])
    return LatentSolution(policy, tuple(V), tuple(Q), np.asarray(init))


def latent_optimal(model: LayeredPomdp) -> LatentSolution:
    """Backward induction on the latent MDP."""
    return _backward(model.init, model.trans, model.reward)


def motor_noise_kernel(A: int, eta: float, kind: str = "uniform") -> np.ndarray:
    """Row-stochastic ``K[a, a']``: probability that choosing ``a`` executes ``a'``.

    ``uniform``: with probability ``eta`` the action is swapped for a uniformly
    random one.  ``ball``: the executed action is uniform over the actions
    within distance ``eta`` of the chosen one (actions are points on a line).
    """
    if kind == "uniform":
        if not 0 <= eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        return (1 - eta) * np.eye(A) + eta / A
    if kind == "ball":
        if eta < 0:
            raise ValueError("ball radius must be nonnegative")
        idx = np.arange(A)
        K = (np.abs(idx[:, None] - idx[None, :]) <= eta).astype(float)
        return K / K.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown noise kind {kind!r}")


def smoothed_model(model: LayeredPomdp, eta: float, noise: str = "uniform") -> LayeredPomdp:
    """Latent dynamics and rewards seen through motor noise."""
    Ks = [motor_noise_kernel(A, eta, noise) for A in model.n_actions]
    trans = [np.einsum("ab,sbt->sat", Ks[h], model.trans[h]) for h in range(model.horizon - 1)]
    reward = [model.reward[h] @ Ks[h].T for h in range(model.horizon)]
    return LayeredPomdp(model.init, trans, model.emit, reward)


def smoothed_latent_optimal(model: LayeredPomdp, eta: float, noise: str = "uniform") -> LatentSolution:
    """Optimal latent policy when actions pass through motor noise before acting.

    The returned policy is written in terms of the chosen (pre-noise) actions,
    so it plugs into the original model.
    """
    if eta == 0:
        return latent_optimal(model)
    m = smoothed_model(model, eta, noise)
    return _backward(m.init, m.trans, m.reward)


def _expert_table(expert) -> LatentPolicy:
    return expert.policy if isinstance(expert, LatentSolution) else expert


# --------------------------------------------------------------------------
# composition with beliefs


def compose_with_true_belief(model: LayeredPomdp, expert) -> HistoryPolicy:
    """Executable policy ``sum_s b_h(s) expert_h(. | s)``."""
    expert = _expert_table(expert)
    beliefs = BeliefCache(model)

    def rule(h, obs, acts):
        return beliefs(obs, acts).probs @ expert.act[h]
    return HistoryPolicy(rule, model.n_actions)


def compose_with_approx_belief(model: LayeredPomdp, expert, L: int,
                               priors: Sequence | None = None) -> WindowPolicy:
    """Window policy playing the expert on the windowed belief.

    At step ``h >= L`` the prior is ``priors[h - L]`` over ``s_{h-L}``
    (uniform when ``priors`` is None).  Windows with zero probability stay
    at the uniform default.
    """
    expert = _expert_table(expert)
    table = []
    for h in range(model.horizon):
        prior = None if (priors is None or h < L) else priors[h - L]
        rows = {}
        for obs_w, act_w, b, _ in enumerate_windows(model, h, L, prior):
            rows[(obs_w, act_w)] = b.probs @ expert.act[h]
        table.append(rows)
    return WindowPolicy(L, True, table, model.n_actions)


# --------------------------------------------------------------------------
# exact optimum over history-dependent policies


def history_count_bound(model: LayeredPomdp) -> int:
    total = 1
    for X, A in zip(model.n_obs, model.n_actions):
        total *= X * A
    return total


def optimal_executable(model: LayeredPomdp, cap: int = DEFAULT_CAP):
    """Best history-dependent policy by backward induction over histories.

    Works with unnormalized joints ``P(s_h, history)`` so values add up
    directly.  Returns ``(policy, J*)``.
    """
    bound = history_count_bound(model)
    if bound > cap:
        raise CapExceededError(f"history space {bound} exceeds cap {cap}")
    H = model.horizon
    table = {}

    def solve(h, obs, acts, alpha):
        q = alpha @ model.reward[h]
        if h + 1 < H:
            O = model.emit[h + 1]
            for a in range(model.n_actions[h]):
                w = alpha @ model.trans[h][:, a, :]
                if not w.any():
                    continue
                for x in range(O.shape[1]):
                    u = w * O[:, x]
                    if u.any():
                        q[a] += solve(h + 1, obs + (x,), acts + (a,), u)
        # ties are judged on the conditional scale so tiny histories are not disadvantaged
        z = alpha.sum()
        best = argmax_lowest(q / z)
        table[(h, obs, acts)] = _one_hot(best, model.n_actions[h])
        return q[best]

    J = 0.0
    for x in range(model.n_obs[0]):
        u = model.init * model.emit[0][:, x]
        if u.any():
            J += solve(0, (x,), (), u)
    return HistoryPolicy.from_table(table, model.n_actions), float(J)


# --------------------------------------------------------------------------
# frame-stacked baselines


def _window_step(model, L, h, obs_w, act_w, a, x):
    """Window key at step ``h+1`` after playing ``a`` and seeing ``x``."""
    n_obs = min(h + 2, L)
    n_act = min(h + 1, L)
    return _tail(obs_w + (x,), n_obs), _tail(act_w + (a,), n_act)


def framestack_plan(model: LayeredPomdp, L: int, cap: int = DEFAULT_CAP) -> WindowPolicy:
    """Plan on the surrogate MDP whose state is the observation/action window.

    The surrogate belief for a window is the windowed belief with a uniform
    prior at step ``h - L``; it drives both the reward and the next-observation
    law.  Only windows reachable in the surrogate are solved.
    """
    if L < 1:
        raise ValueError("window length must be at least 1")
    H = model.horizon
    beliefs = {}
    values = {}
    table = [dict() for _ in range(H)]

    def belief(h, w):
        b = beliefs.get((h, w))
        if b is None:
            b = approx_belief(model, h, L, w[0], w[1]).probs
            beliefs[(h, w)] = b
            if len(beliefs) > cap:
                raise CapExceededError(f"surrogate window space exceeds cap {cap}")
        return b

    def solve(h, w):
        v = values.get((h, w))
        if v is not None:
            return v
        b = belief(h, w)
        q = b @ model.reward[h]
        if h + 1 < H:
            O = model.emit[h + 1]
            for a in range(model.n_actions[h]):
                nxt = b @ model.trans[h][:, a, :]
                px = nxt @ O
                for x in np.flatnonzero(px > 0):
                    q[a] += px[x] * solve(h + 1, _window_step(model, L, h, w[0], w[1], a, int(x)))
        best = argmax_lowest(q)
        table[h][w] = _one_hot(best, model.n_actions[h])
        values[(h, w)] = q[best]
        return q[best]

    p0 = model.init @ model.emit[0]
    for x in np.flatnonzero(p0 > 0):
        solve(0, ((int(x),), ()))
    return WindowPolicy(L, True, table, model.n_actions)


def _run_schedule(n: int, base: float) -> float:
    return base / np.sqrt(n)


def framestack_q_learning(model: LayeredPomdp, L: int, episodes: int,
                          learning_rate: float = 1.0, explore_eps: float = 0.1, seed: int = 0,
                          include_actions: bool = True) -> WindowPolicy:
    """Tabular Q-learning with the window as state and epsilon-greedy exploration.

    The step size for ``(h, window, a)`` is ``learning_rate / sqrt(n)`` after
    its ``n``-th visit.  The returned policy is greedy in Q (lowest index on
    ties); windows never visited play action 0.
    """
    if L < 1:
        raise ValueError("window length must be at least 1")
    rng = np.random.default_rng(seed)
    H = model.horizon
    As = model.n_actions
    Q = [dict() for _ in range(H)]
    N = [dict() for _ in range(H)]

    def key(h, obs, acts):
        n_act = min(h, L) if include_actions else 0
        return _tail(obs, min(h + 1, L)), _tail(acts, n_act)

    def qrow(h, k):
        row = Q[h].get(k)
        if row is None:
            row = Q[h][k] = np.zeros(As[h])
            N[h][k] = np.zeros(As[h], dtype=int)
        return row

    for _ in range(episodes):
        s = int(rng.choice(model.n_states[0], p=model.init))
        obs, acts = (), ()
        prev = None
        for h in range(H):
            x = int(rng.choice(model.n_obs[h], p=model.emit[h][s]))
            obs = obs + (x,)
            k = key(h, obs, acts)
            q = qrow(h, k)
            if prev is not None:
                ph, pk, pa, pr = prev
                _q_update(Q[ph][pk], N[ph][pk], pa, pr + q.max(), learning_rate)
            if rng.random() < explore_eps:
                a = int(rng.integers(As[h]))
            else:
                a = argmax_lowest(q)
            r = float(model.reward[h][s, a])
            prev = (h, k, a, r)
            acts = acts + (a,)
            if h + 1 < H:
                s = int(rng.choice(model.n_states[h + 1], p=model.trans[h][s, a]))
        ph, pk, pa, pr = prev
        _q_update(Q[ph][pk], N[ph][pk], pa, pr, learning_rate)

    table = [{k: _one_hot(argmax_lowest(q), As[h]) for k, q in Q[h].items()} for h in range(H)]
    default = [_one_hot(0, A) for A in As]
    return WindowPolicy(L, include_actions, table, As, default=default)


def _q_update(q, n, a, target, base):
    n[a] += 1
    q[a] += _run_schedule(n[a], base) * (target - q[a])
