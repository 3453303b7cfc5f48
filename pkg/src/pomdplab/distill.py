"""Distilling a latent expert into window policies: Forward (exact and
sampled) and behavior cloning."""

from __future__ import annotations

import numpy as np

from .belief import enumerate_windows
from .core import (LatentPolicy, LayeredPomdp, SwitchPolicy, WindowPolicy, propagate,
                   sample_batch)
from .planning import _expert_table


def forward_population(model: LayeredPomdp, expert, L: int, return_occupancies: bool = False):
    """Infinite-sample limit of Forward with ``L`` trailing random actions.

    Step ``h`` plays the expert on the windowed belief whose prior is the
    exact state occupancy at step ``h - L`` under the steps already built.
    Random actions over the window leave that conditional unbiased, so no
    sampling is involved.
    """
    expert = _expert_table(expert)
    H = model.horizon
    table = [dict() for _ in range(H)]
    policy = WindowPolicy(L, True, table, model.n_actions)
    for h in range(H):
        # the occupancy at h - L only depends on policy steps before it, all built by now
        prior = _occupancies(model, policy, h - L + 1)[h - L] if h >= L else None
        rows = {}
        for obs_w, act_w, b, _ in enumerate_windows(model, h, L, prior):
            rows[(obs_w, act_w)] = b.probs @ expert.act[h]
        table[h] = rows
        policy = WindowPolicy(L, True, table, model.n_actions)
    if return_occupancies:
        return policy, _occupancies(model, policy, H)
    return policy


def _occupancies(model, policy, steps):
    out = []
    for h, joint, _ in propagate(model, policy):
        out.append(sum(joint.values()))
        if len(out) == steps:
            break
    return out


def _empirical_rows(keys_obs, keys_act, labels, A):
    """Label frequencies per distinct window key."""
    if keys_obs.shape[0] == 0:
        return {}
    packed = np.concatenate([keys_obs, keys_act], axis=1)
    n_obs = keys_obs.shape[1]
    uniq, inv = np.unique(packed, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    counts = np.zeros((uniq.shape[0], A))
    np.add.at(counts, (inv, labels), 1.0)
    rows = counts / counts.sum(axis=1, keepdims=True)
    return {(tuple(int(v) for v in u[:n_obs]), tuple(int(v) for v in u[n_obs:])): r
            for u, r in zip(uniq, rows)}


def _expert_labels(expert: LatentPolicy, h, states, u):
    """Expert actions at the visited states, drawn by inverse CDF from ``u``."""
    rows = expert.act[h][states]
    cdf = np.cumsum(rows, axis=1)
    cdf = cdf / cdf[:, -1:]
    return np.minimum((cdf <= u[:, None]).sum(axis=1), rows.shape[1] - 1)


def forward_finite(model: LayeredPomdp, expert, L: int, n_per_step: int, seed: int) -> WindowPolicy:
    """Forward with ``L`` trailing random actions from ``n_per_step`` rollouts per step.

    For step ``h`` the rollouts follow the current estimate until step
    ``h - L - 1`` and act uniformly afterwards; the row for each window is the
    empirical distribution of expert labels.  Rollouts for step ``h`` use
    random stream ``h + 1``.
    """
    expert = _expert_table(expert)
    H = model.horizon
    table = [dict() for _ in range(H)]
    uniform = WindowPolicy.uniform(model, L, True)
    for h in range(H):
        if n_per_step > 0:
            current = WindowPolicy(L, True, table, model.n_actions)
            roll = SwitchPolicy(current, uniform, max(0, h - L))
            batch = sample_batch(model, roll, n_per_step, seed, stream=h + 1, steps=h + 1)
            n_obs, n_act = current.key_length(h)
            u = np.random.Generator(np.random.Philox(key=[int(seed) % 2**64, 10**6 + h])).random(n_per_step)
            labels = _expert_labels(expert, h, batch.states[:, h], u)
            table[h] = _empirical_rows(batch.obs[:, h + 1 - n_obs:h + 1],
                                       batch.actions[:, h - n_act:h], labels, model.n_actions[h])
    return WindowPolicy(L, True, table, model.n_actions)


def behavior_cloning(model: LayeredPomdp, expert, L: int, n_trajectories: int,
                     include_actions: bool = False, seed: int = 0) -> WindowPolicy:
    """Fit window-conditional action frequencies on expert rollouts."""
    expert = _expert_table(expert)
    H = model.horizon
    probe = WindowPolicy(L, include_actions, [{} for _ in range(H)], model.n_actions)
    table = [dict() for _ in range(H)]
    if n_trajectories > 0:
        batch = sample_batch(model, expert, n_trajectories, seed)
        for h in range(H):
            n_obs, n_act = probe.key_length(h)
            table[h] = _empirical_rows(batch.obs[:, h + 1 - n_obs:h + 1],
                                       batch.actions[:, h - n_act:h], batch.actions[:, h],
                                       model.n_actions[h])
    return WindowPolicy(L, include_actions, table, model.n_actions)
