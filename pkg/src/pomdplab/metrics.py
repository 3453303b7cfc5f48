"""Error functionals over trajectory laws, each in exact or Monte Carlo mode.

``mode`` is either ``"exact"`` (forward propagation over full histories,
bounded by ``cap``) or a :class:`~pomdplab.core.MonteCarlo` sampling request.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .belief import (BeliefCache, ImpossibleObservationError, approx_belief, batch_approx_beliefs,
                     batch_true_beliefs, density_ratio)
from .core import (DEFAULT_CAP, CapExceededError, Estimate, LayeredPomdp, MonteCarlo, categorical,
                   enumerate_trajectories, mc_estimate, policy_value, propagate, sample_batch,
                   step_uniforms)
from .planning import _expert_table, latent_optimal, optimal_executable


def _check_mode(mode):
    if mode != "exact" and not isinstance(mode, MonteCarlo):
        raise ValueError(f"unknown mode {mode!r}")


def history_law(model: LayeredPomdp, policy, h: int, cap: int = DEFAULT_CAP) -> dict:
    """``{(x_{0:h}, a_{0:h-1}): P(s_h = ., history)}`` under ``policy``."""
    H = model.horizon
    for k, joint, _ in propagate(model, policy, memory=(H, H), cap=cap):
        if k == h:
            return joint
    raise ValueError(f"step {h} outside horizon {H}")


def history_expectation(model: LayeredPomdp, policy, h: int,
                        f: Callable[[tuple, tuple], float], mode="exact",
                        cap: int = DEFAULT_CAP) -> Estimate:
    """``E^policy[f(x_{0:h}, a_{0:h-1})]``."""
    _check_mode(mode)
    if mode == "exact":
        law = history_law(model, policy, h, cap)
        return Estimate(float(sum(v.sum() * f(obs, acts) for (obs, acts), v in law.items())))
    batch = sample_batch(model, policy, mode.n, mode.seed, steps=h + 1)
    packed = np.concatenate([batch.obs, batch.actions[:, :h]], axis=1)
    uniq, inv = np.unique(packed, axis=0, return_inverse=True)
    vals = np.array([f(tuple(int(v) for v in u[:h + 1]), tuple(int(v) for v in u[h + 1:]))
                     for u in uniq])
    return mc_estimate(vals[inv.reshape(-1)])


def _mc_beliefs(model, policy, h, mode):
    batch = sample_batch(model, policy, mode.n, mode.seed, steps=h + 1)
    return batch, batch_true_beliefs(model, batch.obs, batch.actions[:, :h])


def decodability_error(model: LayeredPomdp, policy, h: int, mode="exact",
                       cap: int = DEFAULT_CAP, beliefs: BeliefCache | None = None) -> Estimate:
    """Expected residual mass ``1 - max_s b_h(s)`` of the true belief."""
    if isinstance(mode, MonteCarlo):
        _, B = _mc_beliefs(model, policy, h, mode)
        return mc_estimate(1.0 - B.max(axis=1))
    beliefs = beliefs or BeliefCache(model)
    return history_expectation(model, policy, h, lambda o, a: 1.0 - beliefs(o, a).probs.max(),
                               mode, cap)


def belief_contraction_error(model: LayeredPomdp, policy, h: int, L: int, prior=None,
                             mode="exact", cap: int = DEFAULT_CAP,
                             beliefs: BeliefCache | None = None) -> Estimate:
    """Expected L1 gap between the true belief and the ``L``-window belief.

    ``prior`` is the window-start distribution over ``s_{h-L}`` (uniform by
    default).  Zero when the window covers the whole history (``h < L``).
    """
    _check_mode(mode)
    if h < L:
        return Estimate(0.0, 0.0, 0, "exact" if mode == "exact" else "monteCarlo")
    if isinstance(mode, MonteCarlo):
        batch, B = _mc_beliefs(model, policy, h, mode)
        W, ok = batch_approx_beliefs(model, h, L, batch.obs[:, h + 1 - L:h + 1],
                                     batch.actions[:, h - L:h], prior)
        return mc_estimate(np.where(ok, np.abs(B - W).sum(axis=1), 2.0))
    beliefs = beliefs or BeliefCache(model)

    def gap(obs, acts):
        b = beliefs(obs, acts).probs
        try:
            w = approx_belief(model, h, L, obs[len(obs) - L:], acts[len(acts) - L:] if L else (),
                              prior).probs
        except ImpossibleObservationError:
            return 2.0
        return float(np.abs(b - w).sum())
    return history_expectation(model, policy, h, gap, mode, cap)


def generalized_contraction(model: LayeredPomdp, policy, h: int, L: int, D, D_prime,
                            obs_prefix: tuple, act_prefix: tuple, mode="exact",
                            cap: int = DEFAULT_CAP):
    """Sensitivity of the window belief to its prior.

    Starts the latent chain at ``s_{h-L} ~ D'`` behind the fixed history
    ``(obs_prefix, act_prefix)`` (``h-L+1`` observations and ``h-L`` actions),
    rolls ``policy`` to step ``h`` and averages
    ``|| b_apx(window; D') - b_apx(window; D) ||_1``.  A window that is
    impossible under ``D`` counts as the maximal gap 2.  Returns
    ``(estimate, density_ratio(D', D))``; an infinite ratio makes any bound
    built on it vacuous.
    """
    _check_mode(mode)
    D, D_prime = np.asarray(D, dtype=float), np.asarray(D_prime, dtype=float)
    ratio = density_ratio(D_prime, D)
    start = h - L
    obs_prefix, act_prefix = tuple(obs_prefix), tuple(act_prefix)
    if L < 1 or start < 0:
        raise ValueError("generalized contraction needs 1 <= L <= h")
    if len(obs_prefix) != start + 1 or len(act_prefix) != start:
        raise ValueError("prefix must hold x_{0:h-L} and a_{0:h-L-1}")

    def gap(obs_w, act_w):
        b1 = approx_belief(model, h, L, obs_w, act_w, D_prime).probs
        try:
            b0 = approx_belief(model, h, L, obs_w, act_w, D).probs
        except ImpossibleObservationError:
            return 2.0
        return float(np.abs(b1 - b0).sum())

    if mode == "exact":
        total = 0.0
        seen = 0

        def rec(k, v, obs, acts):
            nonlocal total, seen
            if k == h:
                seen += 1
                if seen > cap:
                    raise CapExceededError(f"window count exceeds cap {cap}")
                total += v.sum() * gap(obs[start + 1:], acts[start:])
                return
            row = policy.action_probs(k, obs, acts)
            O = model.emit[k + 1]
            for a in np.flatnonzero(row):
                w = row[a] * (v @ model.trans[k][:, a, :])
                for x in range(O.shape[1]):
                    u = w * O[:, x]
                    if u.any():
                        rec(k + 1, u, obs + (x,), acts + (int(a),))
        rec(start, D_prime, obs_prefix, act_prefix)
        return Estimate(float(total)), ratio

    n = mode.n
    states = categorical(np.broadcast_to(D_prime, (n, D_prime.shape[0])),
                         step_uniforms(mode.seed, 1, start, n)[:, 0])
    obs = np.tile(np.array(obs_prefix, dtype=int), (n, 1))
    acts = np.tile(np.array(act_prefix, dtype=int), (n, 1)).reshape(n, start)
    for k in range(start, h):
        u = step_uniforms(mode.seed, 1, k + 1, n)
        a = categorical(policy.action_rows(k, states, obs, acts), u[:, 0])
        states = categorical(model.trans[k][states, a], u[:, 1])
        x = categorical(model.emit[k + 1][states], u[:, 2])
        obs = np.column_stack([obs, x])
        acts = np.column_stack([acts, a])
    packed = np.concatenate([obs[:, start + 1:], acts[:, start:]], axis=1)
    uniq, inv = np.unique(packed, axis=0, return_inverse=True)
    vals = np.array([gap(tuple(int(v) for v in q[:L]), tuple(int(v) for v in q[L:])) for q in uniq])
    return mc_estimate(vals[inv.reshape(-1)]), ratio


def action_prediction_error(model: LayeredPomdp, expert, policy, h: int, mode="exact",
                            cap: int = DEFAULT_CAP, beliefs: BeliefCache | None = None) -> Estimate:
    """Expected residual mass of the expert's action law under the true belief."""
    expert = _expert_table(expert)
    if isinstance(mode, MonteCarlo):
        _, B = _mc_beliefs(model, policy, h, mode)
        return mc_estimate(1.0 - (B @ expert.act[h]).max(axis=1))
    beliefs = beliefs or BeliefCache(model)
    return history_expectation(
        model, policy, h, lambda o, a: 1.0 - (beliefs(o, a).probs @ expert.act[h]).max(), mode, cap)


def trajectory_tv(model: LayeredPomdp, policy_a, policy_b, mode="exact",
                  cap: int = DEFAULT_CAP) -> Estimate:
    """Total variation between the trajectory laws of two policies.

    ``exact`` compares enumerated tables.  ``perStepBound`` returns
    ``sum_h E^A[TV(A_h, B_h)]`` over the shared information ``(s_h, history)``,
    which upper-bounds the exact value; a MonteCarlo mode estimates that sum.
    """
    if mode == "exact":
        pa = enumerate_trajectories(model, policy_a, cap).as_dict()
        pb = enumerate_trajectories(model, policy_b, cap).as_dict()
        keys = pa.keys() | pb.keys()
        return Estimate(0.5 * float(sum(abs(pa.get(k, 0.0) - pb.get(k, 0.0)) for k in keys)))
    H = model.horizon
    if mode == "perStepBound":
        total = 0.0
        for h, joint, _ in propagate(model, policy_a, memory=(H, H), cap=cap):
            S = model.n_states[h]
            for (obs, acts), v in joint.items():
                ma = policy_a.action_matrix(h, obs, acts, S)
                mb = policy_b.action_matrix(h, obs, acts, S)
                total += float(v @ (0.5 * np.abs(ma - mb).sum(axis=1)))
        return Estimate(total)
    if isinstance(mode, MonteCarlo):
        batch = sample_batch(model, policy_a, mode.n, mode.seed)
        per = np.zeros(mode.n)
        for h in range(H):
            ra = policy_a.action_rows(h, batch.states[:, h], batch.obs[:, :h + 1], batch.actions[:, :h])
            rb = policy_b.action_rows(h, batch.states[:, h], batch.obs[:, :h + 1], batch.actions[:, :h])
            per += 0.5 * np.abs(ra - rb).sum(axis=1)
        return mc_estimate(per)
    raise ValueError(f"unknown mode {mode!r}")


def suboptimality(model: LayeredPomdp, policy, reference: str = "latent",
                  mode="exact", cap: int = DEFAULT_CAP) -> Estimate:
    """``J(reference) - J(policy)`` with ``reference`` in {latent, executable}."""
    if reference == "latent":
        ref = latent_optimal(model).value
    elif reference in ("executable", "executableOptimum"):
        ref = optimal_executable(model, cap)[1]
    else:
        raise ValueError(f"unknown reference {reference!r}")
    j = policy_value(model, policy, mode, cap)
    return Estimate(ref - j.value, j.stderr, j.n, j.mode)
