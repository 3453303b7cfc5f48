"""Tabular layered POMDP model, policy classes, sampling and exact evaluation.

Steps are numbered ``0 .. H-1`` throughout the package.  At step ``h`` the
latent state is ``s_h``, the observation ``x_h`` and the action ``a_h``;
``trans[h]`` maps ``(s_h, a_h)`` to a distribution over ``s_{h+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

ROW_TOL = 1e-9
DEFAULT_CAP = 10**6


class ModelError(ValueError):
    """Raised when a model violates its structural invariants."""


class CapExceededError(RuntimeError):
    """Raised when an exact computation would exceed the enumeration cap."""


class ShapeMismatchError(ValueError):
    pass


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LayeredPomdp:
    """Finite-horizon POMDP with per-step state, observation and action sets.

    Attributes
    ----------
    init : (S_0,) initial state distribution.
    trans : tuple of H-1 arrays, ``trans[h][s, a, s']`` = P(s_{h+1}=s' | s_h=s, a_h=a).
    emit : tuple of H arrays, ``emit[h][s, x]`` = O_h(x | s).
    reward : tuple of H arrays, ``reward[h][s, a]`` in [0, 1].
    """

    init: np.ndarray
    trans: tuple
    emit: tuple
    reward: tuple

    def __post_init__(self):
        object.__setattr__(self, "init", _frozen(self.init))
        object.__setattr__(self, "trans", tuple(_frozen(t) for t in self.trans))
        object.__setattr__(self, "emit", tuple(_frozen(e) for e in self.emit))
        object.__setattr__(self, "reward", tuple(_frozen(r) for r in self.reward))
        H = len(self.emit)
        if H < 1:
            raise ShapeMismatchError("horizon must be positive")
        if len(self.reward) != H or len(self.trans) != H - 1:
            raise ShapeMismatchError(
                f"expected {H} emission/reward tables and {H - 1} transition tables")
        if self.init.ndim != 1 or self.init.shape[0] != self.emit[0].shape[0]:
            raise ShapeMismatchError("init does not match emit[0]")
        for h in range(H):
            e, r = self.emit[h], self.reward[h]
            if e.ndim != 2 or r.ndim != 2 or r.shape[0] != e.shape[0]:
                raise ShapeMismatchError(f"step {h}: emit/reward state dims disagree")
            if h < H - 1:
                t = self.trans[h]
                if t.shape != (e.shape[0], r.shape[1], self.emit[h + 1].shape[0]):
                    raise ShapeMismatchError(f"step {h}: transition shape {t.shape}")

    @property
    def horizon(self) -> int:
        return len(self.emit)

    @property
    def n_states(self) -> tuple:
        return tuple(e.shape[0] for e in self.emit)

    @property
    def n_obs(self) -> tuple:
        return tuple(e.shape[1] for e in self.emit)

    @property
    def n_actions(self) -> tuple:
        return tuple(r.shape[1] for r in self.reward)

    def obs_matrix(self, h: int) -> np.ndarray:
        return self.emit[h]


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def _check_rows(name, arr, tol, out):
    rows = arr.reshape(-1, arr.shape[-1])
    if (rows < 0).any():
        out.append(f"negative entry in {name}")
    bad = np.abs(rows.sum(axis=1) - 1.0) > tol
    if bad.any():
        out.append(f"row sum violated in {name} ({int(bad.sum())} rows)")


def validate(model: LayeredPomdp, tol: float = ROW_TOL) -> ValidationReport:
    """Check kernel rows, reward range and the reward budget."""
    v = []
    _check_rows("init", model.init[None, :], tol, v)
    for h, t in enumerate(model.trans):
        _check_rows(f"trans[{h}]", t, tol, v)
    for h, e in enumerate(model.emit):
        _check_rows(f"emit[{h}]", e, tol, v)
    for h, r in enumerate(model.reward):
        if (r < 0).any() or (r > 1).any():
            v.append(f"reward range violated at step {h}")
    budget = sum(float(r.max()) for r in model.reward)
    if budget > 1 + tol:
        v.append(f"reward budget violated: sum of per-step maxima is {budget:.6g}")
    return ValidationReport(v)


def _renorm(arr, tol):
    arr = np.array(arr, dtype=float)
    sums = arr.sum(axis=-1, keepdims=True)
    if (arr < 0).any() or (np.abs(sums - 1) > tol).any():
        raise ModelError("probability row deviates from 1 beyond tolerance")
    # rows already normalized to rounding are left untouched so files round-trip bit-exactly
    return np.where(np.abs(sums - 1) > 1e-12, arr / sums, arr)


def renormalized(model: LayeredPomdp, tol: float = ROW_TOL) -> LayeredPomdp:
    """Return a copy with rows rescaled to sum to 1; larger deviations raise."""
    return LayeredPomdp(
        init=_renorm(model.init, tol),
        trans=[_renorm(t, tol) for t in model.trans],
        emit=[_renorm(e, tol) for e in model.emit],
        reward=model.reward,
    )


def require_valid(model: LayeredPomdp) -> LayeredPomdp:
    report = validate(model)
    if not report.ok:
        raise ModelError("; ".join(report.violations))
    return model


# --------------------------------------------------------------------------
# policies


def _tail(seq: tuple, n: int) -> tuple:
    if n <= 0:
        return ()
    return tuple(seq[max(0, len(seq) - n):])


class LatentPolicy:
    """Markovian policy reading the latent state: ``act[h][s, a]``."""

    executable = False
    memory = (0, 0)

    def __init__(self, act: Sequence[np.ndarray]):
        self.act = tuple(_frozen(a) for a in act)
        for h, a in enumerate(self.act):
            if a.ndim != 2:
                raise ShapeMismatchError(f"step {h}: action table must be 2-d")

    @classmethod
    def from_actions(cls, actions: Sequence[Sequence[int]], n_actions: Sequence[int]):
        """Deterministic policy from per-step action indices."""
        act = []
        for h, idx in enumerate(actions):
            idx = np.asarray(idx, dtype=int)
            t = np.zeros((len(idx), n_actions[h]))
            t[np.arange(len(idx)), idx] = 1.0
            act.append(t)
        return cls(act)

    @classmethod
    def uniform(cls, model: LayeredPomdp):
        return cls([np.full((S, A), 1.0 / A) for S, A in zip(model.n_states, model.n_actions)])

    @property
    def horizon(self) -> int:
        return len(self.act)

    @property
    def deterministic(self) -> bool:
        return all(np.all((a == 0) | (a == 1)) and np.all(a.sum(axis=1) == 1) for a in self.act)

    def greedy_actions(self, h: int) -> np.ndarray:
        return np.argmax(self.act[h], axis=1)

    def action_matrix(self, h, obs, acts, n_states=None) -> np.ndarray:
        return self.act[h]

    def action_rows(self, h, states, obs, acts) -> np.ndarray:
        return self.act[h][states]

    def check(self, model: LayeredPomdp):
        if self.horizon != model.horizon:
            raise ShapeMismatchError("policy horizon differs from model horizon")
        for h, a in enumerate(self.act):
            if a.shape != (model.n_states[h], model.n_actions[h]):
                raise ShapeMismatchError(f"step {h}: latent policy shape {a.shape}")


class _Executable:
    """Shared batch machinery for policies that only read the history."""

    executable = True

    def __init__(self, n_actions: Sequence[int]):
        self.n_actions = tuple(int(a) for a in n_actions)

    @property
    def horizon(self) -> int:
        return len(self.n_actions)

    def action_probs(self, h: int, obs: tuple, acts: tuple) -> np.ndarray:
        raise NotImplementedError

    def action_matrix(self, h, obs, acts, n_states) -> np.ndarray:
        row = self.action_probs(h, tuple(obs), tuple(acts))
        return np.broadcast_to(row, (n_states, row.shape[0]))

    def _batch_keys(self, h, obs, acts):
        return obs, acts

    def action_rows(self, h, states, obs, acts) -> np.ndarray:
        obs, acts = self._batch_keys(h, np.asarray(obs), np.asarray(acts))
        n = obs.shape[0]
        packed = np.concatenate([obs, acts], axis=1) if acts.size else obs
        if packed.shape[1] == 0:
            row = self.action_probs(h, (), ())
            return np.broadcast_to(row, (n, row.shape[0]))
        uniq, inv = np.unique(packed, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        n_obs = obs.shape[1]
        rows = np.stack([
            self.action_probs(h, tuple(int(v) for v in u[:n_obs]), tuple(int(v) for v in u[n_obs:]))
            for u in uniq])
        return rows[inv]

    def check(self, model: LayeredPomdp):
        if self.n_actions != model.n_actions:
            raise ShapeMismatchError("policy action dims differ from model")


class WindowPolicy(_Executable):
    """L-step executable policy stored as per-step tables.

    ``table[h]`` maps a window key ``(obs_window, act_window)`` to an action
    distribution.  At step ``h`` the observation window is
    ``x_{max(0,h-L+1)..h}`` and, when ``include_actions`` is set, the action
    window is ``a_{max(0,h-L)..h-1}``; otherwise it is empty.  Keys missing from
    the table map to ``default`` (uniform unless overridden).
    """

    def __init__(self, window: int, include_actions: bool, table: Sequence[dict],
                 n_actions: Sequence[int], default: Sequence[np.ndarray] | None = None):
        super().__init__(n_actions)
        if window < 1:
            raise ValueError("window length must be at least 1")
        self.window = int(window)
        self.include_actions = bool(include_actions)
        if len(table) != len(self.n_actions):
            raise ShapeMismatchError("table length differs from horizon")
        self.table = [dict(t) for t in table]
        if default is None:
            default = [np.full(A, 1.0 / A) for A in self.n_actions]
        self.default = [_frozen(d) for d in default]
        for h, t in enumerate(self.table):
            for key, row in t.items():
                self._check_key(h, key)
                t[key] = _frozen(row)

    @classmethod
    def uniform(cls, model: LayeredPomdp, window: int = 1, include_actions: bool = False):
        return cls(window, include_actions, [{} for _ in range(model.horizon)], model.n_actions)

    @property
    def memory(self):
        return (self.window, self.window if self.include_actions else 0)

    def key_length(self, h: int) -> tuple:
        n_obs = min(h + 1, self.window)
        n_act = min(h, self.window) if self.include_actions else 0
        return n_obs, n_act

    def _check_key(self, h, key):
        obs_w, act_w = key
        if (len(obs_w), len(act_w)) != self.key_length(h):
            raise ShapeMismatchError(f"step {h}: window key {key} has wrong arity")

    def key(self, h: int, obs: tuple, acts: tuple) -> tuple:
        """Window key at step ``h`` from a (possibly longer) history suffix."""
        n_obs, n_act = self.key_length(h)
        return _tail(tuple(obs), n_obs), _tail(tuple(acts), n_act)

    def action_probs(self, h, obs, acts):
        return self.table[h].get(self.key(h, obs, acts), self.default[h])

    def _batch_keys(self, h, obs, acts):
        n_obs, n_act = self.key_length(h)
        obs = obs[:, obs.shape[1] - n_obs:]
        acts = acts[:, acts.shape[1] - n_act:] if n_act else acts[:, :0]
        return obs, acts


class HistoryPolicy(_Executable):
    """Executable policy given by a rule ``fn(h, obs, acts) -> action probs``.

    ``obs`` is ``(x_0, .., x_h)`` and ``acts`` is ``(a_0, .., a_{h-1})``.
    Results are memoized per history.
    """

    def __init__(self, fn: Callable[[int, tuple, tuple], np.ndarray], n_actions: Sequence[int]):
        super().__init__(n_actions)
        self.fn = fn
        self._cache = {}

    @classmethod
    def from_table(cls, table: dict, n_actions: Sequence[int]):
        """Explicit policy from ``{(h, obs, acts): row}``; absent entries are uniform."""
        frozen = {k: _frozen(v) for k, v in table.items()}

        def rule(h, obs, acts):
            row = frozen.get((h, obs, acts))
            if row is None:
                return np.full(n_actions[h], 1.0 / n_actions[h])
            return row
        return cls(rule, n_actions)

    @property
    def memory(self):
        H = self.horizon
        return (H, H)

    def action_probs(self, h, obs, acts):
        key = (h, tuple(obs), tuple(acts))
        row = self._cache.get(key)
        if row is None:
            row = np.asarray(self.fn(h, key[1], key[2]), dtype=float)
            self._cache[key] = row
        return row


class SwitchPolicy:
    """Plays ``first`` before step ``switch`` and ``second`` from then on."""

    def __init__(self, first, second, switch: int):
        self.first, self.second, self.switch = first, second, int(switch)
        self.executable = first.executable and second.executable
        self.memory = tuple(max(a, b) for a, b in zip(first.memory, second.memory))

    @property
    def horizon(self):
        return self.second.horizon

    def _pick(self, h):
        return self.first if h < self.switch else self.second

    def action_matrix(self, h, obs, acts, n_states):
        return self._pick(h).action_matrix(h, obs, acts, n_states)

    def action_rows(self, h, states, obs, acts):
        return self._pick(h).action_rows(h, states, obs, acts)

    def action_probs(self, h, obs, acts):
        return self._pick(h).action_probs(h, obs, acts)

    def check(self, model):
        self.first.check(model)
        self.second.check(model)


def uniform_policy(model: LayeredPomdp) -> WindowPolicy:
    return WindowPolicy.uniform(model)


def _check_policy(model, policy):
    policy.check(model)


# --------------------------------------------------------------------------
# trajectories


class Trajectory(NamedTuple):
    states: tuple
    obs: tuple
    actions: tuple
    rewards: tuple


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    states: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __len__(self):
        return self.states.shape[0]

    def returns(self) -> np.ndarray:
        return self.rewards.sum(axis=1)

    def __getitem__(self, i) -> Trajectory:
        return Trajectory(tuple(int(v) for v in self.states[i]), tuple(int(v) for v in self.obs[i]),
                          tuple(int(v) for v in self.actions[i]), tuple(float(v) for v in self.rewards[i]))


def _seed_key(seed: int, stream: int) -> np.ndarray:
    return np.array([int(seed) % 2**64, int(stream) % 2**64], dtype=np.uint64)


def step_uniforms(seed: int, stream: int, h: int, n: int, k: int = 3) -> np.ndarray:
    """Uniforms for trials ``0..n-1`` at step ``h``.

    Counter-based: row ``i`` depends only on ``(seed, stream, h, i)``, never on ``n``.
    """
    bitgen = np.random.Philox(key=_seed_key(seed, stream), counter=[0, 0, h, 0])
    return np.random.Generator(bitgen).random((n, k))


def categorical(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw, one index per row; never returns a zero-probability index."""
    cdf = np.cumsum(rows, axis=1)
    cdf = cdf / cdf[:, -1:]
    return np.minimum((cdf <= u[:, None]).sum(axis=1), rows.shape[1] - 1)


def sample_batch(model: LayeredPomdp, policy, n: int, seed: int, stream: int = 0,
                 steps: int | None = None) -> TrajectoryBatch:
    """Sample ``n`` trajectories (optionally truncated to the first ``steps`` steps)."""
    _check_policy(model, policy)
    H = model.horizon if steps is None else steps
    states = np.zeros((n, H), dtype=int)
    obs = np.zeros((n, H), dtype=int)
    acts = np.zeros((n, H), dtype=int)
    rew = np.zeros((n, H))
    for h in range(H):
        u = step_uniforms(seed, stream, h, n)
        if h == 0:
            srows = np.broadcast_to(model.init, (n, model.init.shape[0]))
        else:
            srows = model.trans[h - 1][states[:, h - 1], acts[:, h - 1]]
        states[:, h] = categorical(srows, u[:, 0])
        obs[:, h] = categorical(model.emit[h][states[:, h]], u[:, 1])
        arows = policy.action_rows(h, states[:, h], obs[:, :h + 1], acts[:, :h])
        acts[:, h] = categorical(arows, u[:, 2])
        rew[:, h] = model.reward[h][states[:, h], acts[:, h]]
    return TrajectoryBatch(states, obs, acts, rew)


def sample_trajectory(model: LayeredPomdp, policy, seed: int) -> Trajectory:
    return sample_batch(model, policy, 1, seed)[0]


@dataclass(frozen=True, eq=False)
class TrajectoryTable:
    """Every positive-probability trajectory with its exact probability."""

    states: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    probs: np.ndarray
    rewards: np.ndarray

    def __len__(self):
        return self.probs.shape[0]

    def __iter__(self) -> Iterator[tuple]:
        for i in range(len(self)):
            yield Trajectory(tuple(int(v) for v in self.states[i]), tuple(int(v) for v in self.obs[i]),
                             tuple(int(v) for v in self.actions[i]),
                             tuple(float(v) for v in self.rewards[i])), float(self.probs[i])

    def as_dict(self) -> dict:
        keys = np.concatenate([self.states, self.obs, self.actions], axis=1)
        return {tuple(int(v) for v in k): float(p) for k, p in zip(keys, self.probs)}

    def value(self) -> float:
        return float(self.probs @ self.rewards.sum(axis=1))


def trajectory_count_bound(model: LayeredPomdp) -> int:
    total = 1
    for S, X, A in zip(model.n_states, model.n_obs, model.n_actions):
        total *= S * X * A
    return total


def enumerate_trajectories(model: LayeredPomdp, policy, cap: int = DEFAULT_CAP) -> TrajectoryTable:
    """Exact joint law of ``(s, x, a)_{0:H}`` under ``policy``."""
    _check_policy(model, policy)
    bound = trajectory_count_bound(model)
    if bound > cap:
        raise CapExceededError(f"trajectory space {bound} exceeds cap {cap}")
    H = model.horizon
    states = np.zeros((1, 0), dtype=int)
    obs = np.zeros((1, 0), dtype=int)
    acts = np.zeros((1, 0), dtype=int)
    probs = np.ones(1)

    def expand(rows, states, obs, acts, probs):
        n, k = rows.shape
        p = (probs[:, None] * rows).reshape(-1)
        keep = p > 0
        parent = np.repeat(np.arange(n), k)[keep]
        new = np.tile(np.arange(k), n)[keep]
        return parent, new, p[keep]

    for h in range(H):
        srows = (np.broadcast_to(model.init, (len(probs), model.init.shape[0])) if h == 0
                 else model.trans[h - 1][states[:, h - 1], acts[:, h - 1]])
        parent, s_new, probs = expand(srows, states, obs, acts, probs)
        states = np.column_stack([states[parent], s_new])
        obs, acts = obs[parent], acts[parent]

        parent, x_new, probs = expand(model.emit[h][states[:, h]], states, obs, acts, probs)
        states, acts = states[parent], acts[parent]
        obs = np.column_stack([obs[parent], x_new])

        arows = policy.action_rows(h, states[:, h], obs, acts)
        parent, a_new, probs = expand(arows, states, obs, acts, probs)
        states, obs = states[parent], obs[parent]
        acts = np.column_stack([acts[parent], a_new])
    rewards = np.stack([model.reward[h][states[:, h], acts[:, h]] for h in range(H)], axis=1) \
        if len(probs) else np.zeros((0, H))
    return TrajectoryTable(states, obs, acts, probs, rewards)


# --------------------------------------------------------------------------
# forward propagation of (window, state) joints


def propagate(model: LayeredPomdp, policy, memory: tuple | None = None,
              cap: int = DEFAULT_CAP) -> Iterator[tuple]:
    """Yield ``(h, joint, reward_h)`` for each step.

    ``joint`` maps a tracked key ``(obs_tail, act_tail)`` to the vector
    ``P(s_h = ., key)`` and ``reward_h`` is ``E[r_h]``.  The tracked tails hold
    the last ``memory[0]`` observations (through ``x_h``) and the last
    ``memory[1]`` actions (through ``a_{h-1}``); they default to the policy's
    own memory and must not be shorter.
    """
    _check_policy(model, policy)
    H = model.horizon
    need = policy.memory
    if memory is None:
        memory = need
    memory = tuple(min(m, H) for m in memory)
    if memory[0] < min(need[0], H) or memory[1] < min(need[1], H):
        raise ValueError(f"tracked memory {memory} shorter than policy memory {need}")
    lo, la = memory

    joint = {}
    for x in range(model.n_obs[0]):
        u = model.init * model.emit[0][:, x]
        if u.any():
            k = (_tail((x,), lo), ())
            joint[k] = joint[k] + u if k in joint else u
    for h in range(H):
        S, A = model.n_states[h], model.n_actions[h]
        if len(joint) > cap:
            raise CapExceededError(f"{len(joint)} tracked keys at step {h} exceed cap {cap}")
        mats = {key: policy.action_matrix(h, key[0], key[1], S) for key in joint}
        r = sum(float(v @ (mats[key] * model.reward[h]).sum(axis=1)) for key, v in joint.items())
        yield h, joint, r
        if h == H - 1:
            return
        nxt = {}
        T, O = model.trans[h], model.emit[h + 1]
        for (ow, aw), v in joint.items():
            sa = v[:, None] * mats[(ow, aw)]
            for a in range(A):
                col = sa[:, a]
                if not col.any():
                    continue
                w = col @ T[:, a, :]
                new_aw = _tail(aw + (a,), la)
                for x in range(O.shape[1]):
                    u = w * O[:, x]
                    if not u.any():
                        continue
                    k = (_tail(ow + (x,), lo), new_aw)
                    prev = nxt.get(k)
                    nxt[k] = u if prev is None else prev + u
        joint = nxt


def state_occupancy(model: LayeredPomdp, policy, steps: int | None = None) -> list:
    """Marginal law of ``s_h`` for ``h < steps``; only earlier policy steps matter."""
    steps = model.horizon if steps is None else steps
    out = []
    for h, joint, _ in propagate(model, policy):
        if h >= steps:
            break
        out.append(sum(joint.values()))
    return out


# --------------------------------------------------------------------------
# values


class Estimate(NamedTuple):
    value: float
    stderr: float = 0.0
    n: int = 0
    mode: str = "exact"

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class MonteCarlo:
    n: int
    seed: int


def mc_estimate(samples: np.ndarray) -> Estimate:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return Estimate(float(samples.mean()), se, n, "monteCarlo")


def policy_value(model: LayeredPomdp, policy, mode="exact", cap: int = DEFAULT_CAP) -> Estimate:
    """Expected total reward ``J(policy)``.

    Exact mode propagates the joint law of the state and the policy's window;
    history policies track full histories and are subject to ``cap``.
    """
    if isinstance(mode, MonteCarlo):
        batch = sample_batch(model, policy, mode.n, mode.seed)
        return mc_estimate(batch.returns())
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    return Estimate(sum(r for _, _, r in propagate(model, policy, cap=cap)))


def value(model, policy, cap: int = DEFAULT_CAP) -> float:
    """Exact ``J(policy)`` as a float."""
    return policy_value(model, policy, cap=cap).value
