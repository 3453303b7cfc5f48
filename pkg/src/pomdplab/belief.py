"""Exact Bayesian filtering and divergences between beliefs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .core import LayeredPomdp

BELIEF_TOL = 1e-9


class ImpossibleObservationError(ValueError):
    """An observation (or history) has zero probability under the prior."""


@dataclass(frozen=True, eq=False)
class Belief:
    """Distribution over the latent states of step ``step``."""

    step: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1) > BELIEF_TOL:
            raise ValueError("belief must be a nonnegative vector summing to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __len__(self):
        return self.probs.shape[0]


def _vec(b) -> np.ndarray:
    return b.probs if isinstance(b, Belief) else np.asarray(b, dtype=float)


def _normalize(v: np.ndarray, what: str) -> np.ndarray:
    z = v.sum()
    if z <= 0:
        raise ImpossibleObservationError(what)
    return v / z


def bayes_update(model: LayeredPomdp, h: int, prior, x: int) -> Belief:
    """Posterior over ``s_h`` after observing ``x`` at step ``h``."""
    v = model.emit[h][:, x] * _vec(prior)
    return Belief(h, _normalize(v, f"observation {x} impossible at step {h}"))


def transition_push(model: LayeredPomdp, h: int, prior, a: int) -> Belief:
    """Push a step ``h-1`` belief through ``P(. | ., a)`` to step ``h``."""
    if h < 1:
        raise ValueError("transition push needs h >= 1")
    v = _vec(prior) @ model.trans[h - 1][:, a, :]
    return Belief(h, v / v.sum())


def belief_update(model: LayeredPomdp, h: int, prior, a: int, x: int) -> Belief:
    return bayes_update(model, h, transition_push(model, h, prior, a), x)


def _filter(model, start, prior, obs, acts):
    """Run the filter from step ``start`` on ``obs`` (len k) and ``acts`` (len k-1)."""
    b = bayes_update(model, start, prior, obs[0])
    for i in range(1, len(obs)):
        b = belief_update(model, start + i, b, acts[i - 1], obs[i])
    return b


def true_belief(model: LayeredPomdp, obs: Sequence[int], acts: Sequence[int] = ()) -> Belief:
    """Belief over ``s_h`` given ``x_{0:h}`` and ``a_{0:h-1}``, ``h = len(obs) - 1``."""
    obs, acts = tuple(obs), tuple(acts)
    if not obs or len(acts) != len(obs) - 1:
        raise ValueError("history needs len(acts) == len(obs) - 1 >= 0")
    try:
        return _filter(model, 0, model.init, obs, acts)
    except ImpossibleObservationError as e:
        raise ImpossibleObservationError(f"impossible history: {e}") from None


class BeliefCache:
    """Memoized true beliefs keyed by history; shares work across prefix-sharing histories."""

    def __init__(self, model: LayeredPomdp):
        self.model = model
        self._memo: dict = {}

    def __call__(self, obs, acts=()) -> Belief:
        key = (tuple(obs), tuple(acts))
        b = self._memo.get(key)
        if b is not None:
            return b
        o, a = key
        if len(o) == 1:
            b = bayes_update(self.model, 0, self.model.init, o[0])
        else:
            b = belief_update(self.model, len(o) - 1, self(o[:-1], a[:-1]), a[-1], o[-1])
        self._memo[key] = b
        return b


def approx_belief(model: LayeredPomdp, h: int, L: int, obs_w: Sequence[int] = (),
                  act_w: Sequence[int] = (), prior=None) -> Belief:
    """Windowed belief over ``s_h``.

    The window holds ``x_{h-L+1..h}`` and ``a_{h-L..h-1}``; ``prior`` is a
    distribution over ``s_{h-L}`` (uniform when omitted).  For ``h < L`` the
    window reaches the start of the episode and the true belief is returned
    (then ``obs_w`` has ``h+1`` entries and ``act_w`` has ``h``).
    """
    obs_w, act_w = tuple(obs_w), tuple(act_w)
    if L == 0:
        if prior is None:
            return Belief(h, np.full(model.n_states[h], 1.0 / model.n_states[h]))
        return Belief(h, _vec(prior))
    if h < L:
        return true_belief(model, obs_w, act_w)
    if len(obs_w) != L or len(act_w) != L:
        raise ValueError(f"window at step {h} with L={L} needs {L} observations and actions")
    start = h - L
    b = _vec(prior) if prior is not None else np.full(model.n_states[start], 1.0 / model.n_states[start])
    try:
        for i in range(L):
            b = belief_update(model, start + 1 + i, b, act_w[i], obs_w[i])
    except ImpossibleObservationError as e:
        raise ImpossibleObservationError(f"impossible window: {e}") from None
    return b


def enumerate_windows(model: LayeredPomdp, h: int, L: int, prior=None) -> Iterator[tuple]:
    """Yield ``(obs_w, act_w, belief, weight)`` for every window with positive probability.

    ``weight`` is the window's probability when actions are uniform over the
    window and ``s_{h-L} ~ prior``; for ``h < L`` the window is the whole
    history and starts from the initial distribution.
    """
    if h < L:
        start, n_obs = 0, h + 1
        v0 = model.init
    else:
        start, n_obs = h - L, L
        v0 = _vec(prior) if prior is not None else np.full(model.n_states[start], 1.0 / model.n_states[start])

    def rec(step, v, obs, acts):
        if len(obs) == n_obs:
            z = v.sum()
            yield obs, acts, Belief(h, v / z), float(z)
            return
        if h < L and not obs:
            for x in range(model.n_obs[step]):
                u = v * model.emit[step][:, x]
                if u.any():
                    yield from rec(step, u, (x,), ())
            return
        nxt = step + 1
        A = model.n_actions[step]
        for a in range(A):
            w = (v @ model.trans[step][:, a, :]) / A
            for x in range(model.n_obs[nxt]):
                u = w * model.emit[nxt][:, x]
                if u.any():
                    yield from rec(nxt, u, obs + (x,), acts + (a,))

    yield from rec(start, np.asarray(v0, dtype=float), (), ())


# --------------------------------------------------------------------------
# divergences


def v_inf(b) -> float:
    """Residual mass ``1 - max_s b(s)``."""
    return float(1.0 - _vec(b).max())


def tv_dist(b, bp) -> float:
    return float(0.5 * np.abs(_vec(b) - _vec(bp)).sum())


def density_ratio(b, bp) -> float:
    """``max_s b(s)/b'(s)`` with ``0/0 = 1``; ``inf`` when ``b`` escapes the support of ``b'``."""
    p, q = _vec(b), _vec(bp)
    if ((p > 0) & (q == 0)).any():
        return float("inf")
    pos = q > 0
    ratios = p[pos] / q[pos]
    out = float(ratios.max()) if ratios.size else 1.0
    if (~pos).any():
        out = max(out, 1.0)
    return out


def dpr(b, bp) -> float:
    tv = tv_dist(b, bp)
    ratio = density_ratio(b, bp)
    if tv == 0:
        return 0.0
    return tv * ratio


# --------------------------------------------------------------------------
# vectorized filters for sampled batches


def _batch_run(model, start, B, obs, acts):
    """Filter rows of ``B`` (over ``s_start``) through ``acts[:, i]``, ``obs[:, i]``.

    Returns the normalized final rows (zero where a row became impossible) and
    a mask of rows that stayed possible.
    """
    ok = np.ones(B.shape[0], dtype=bool)
    for i in range(obs.shape[1]):
        k = start + 1 + i
        B = np.einsum("ns,nst->nt", B, model.trans[k - 1][:, acts[:, i], :].transpose(1, 0, 2))
        B = B * model.emit[k][:, obs[:, i]].T
        z = B.sum(axis=1, keepdims=True)
        ok &= z[:, 0] > 0
        B = np.divide(B, z, out=np.zeros_like(B), where=z > 0)
    return B, ok


def batch_true_beliefs(model: LayeredPomdp, obs: np.ndarray, acts: np.ndarray) -> np.ndarray:
    """True beliefs for each row of ``obs`` (n, h+1) and ``acts`` (n, >= h)."""
    obs, acts = np.asarray(obs), np.asarray(acts)
    B = model.init[None, :] * model.emit[0][:, obs[:, 0]].T
    z = B.sum(axis=1, keepdims=True)
    if (z <= 0).any():
        raise ImpossibleObservationError("impossible history in batch")
    B, ok = _batch_run(model, 0, B / z, obs[:, 1:], acts)
    if not ok.all():
        raise ImpossibleObservationError("impossible history in batch")
    return B


def batch_approx_beliefs(model: LayeredPomdp, h: int, L: int, obs_w: np.ndarray,
                         act_w: np.ndarray, prior=None):
    """Windowed beliefs for each row (requires ``h >= L >= 1``).

    Returns ``(beliefs, ok)`` where ``ok`` flags windows possible under the prior.
    """
    start = h - L
    S0 = model.n_states[start]
    p = np.full(S0, 1.0 / S0) if prior is None else _vec(prior)
    B = np.broadcast_to(p, (obs_w.shape[0], S0)).copy()
    return _batch_run(model, start, B, np.asarray(obs_w), np.asarray(act_w))
