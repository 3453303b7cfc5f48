"""Model families: perturbed Block MDPs, noisy sensors, the two-state lower-bound
instance, a smoothing toy, random tiny POMDPs, and JSON persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import LayeredPomdp, ModelError, renormalized, require_valid

DYNAMICS_MODES = ("deterministic", "stochastic", "uniformMixing")
NOISE_STYLES = ("uniform", "randomDirichlet")


@dataclass(frozen=True, eq=False)
class PerturbedBlockMeta:
    """Decomposition ``emit[h] = (1 - delta) * block_emit[h] + delta * noise_emit[h]``.

    ``decode[h][x]`` is the state whose block contains observation ``x``.
    """

    delta: float
    decode: tuple
    block_emit: tuple
    noise_emit: tuple
    dynamics_mode: str

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "decode": [list(map(int, d)) for d in self.decode],
            "blockEmit": [np.asarray(b).tolist() for b in self.block_emit],
            "noiseEmit": [np.asarray(n).tolist() for n in self.noise_emit],
            "dynamicsMode": self.dynamics_mode,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PerturbedBlockMeta":
        return cls(
            delta=float(d["delta"]),
            decode=tuple(np.asarray(x, dtype=int) for x in d["decode"]),
            block_emit=tuple(np.asarray(x, dtype=float) for x in d["blockEmit"]),
            noise_emit=tuple(np.asarray(x, dtype=float) for x in d["noiseEmit"]),
            dynamics_mode=d["dynamicsMode"],
        )


def check_meta(model: LayeredPomdp, meta: PerturbedBlockMeta, tol: float = 1e-12) -> list:
    """Problems with ``meta`` as a description of ``model``; empty when consistent."""
    problems = []
    if meta.dynamics_mode not in DYNAMICS_MODES:
        problems.append(f"unknown dynamics mode {meta.dynamics_mode!r}")
    for h in range(model.horizon):
        blk, noise = np.asarray(meta.block_emit[h]), np.asarray(meta.noise_emit[h])
        if ((blk > 0).sum(axis=0) > 1).any():
            problems.append(f"step {h}: block supports overlap")
        mix = (1 - meta.delta) * blk + meta.delta * noise
        if np.abs(mix - model.emit[h]).max() > tol:
            problems.append(f"step {h}: emit is not the stated mixture")
        dec = np.asarray(meta.decode[h])
        owner = np.argmax(blk, axis=0)
        covered = blk.max(axis=0) > 0
        if (dec[covered] != owner[covered]).any():
            problems.append(f"step {h}: decode disagrees with block supports")
    return problems


def _block_partition(S: int, X: int):
    """Contiguous blocks of size X // S; the last state takes the remainder."""
    size = X // S
    decode = np.minimum(np.arange(X) // size, S - 1)
    block = np.zeros((S, X))
    block[decode, np.arange(X)] = 1.0
    block /= block.sum(axis=1, keepdims=True)
    return decode, block


def _dynamics(rng, S, A, H, mode):
    trans = []
    for _ in range(H - 1):
        if mode == "deterministic":
            t = np.zeros((S, A, S))
            nxt = rng.integers(0, S, size=(S, A))
            t[np.arange(S)[:, None], np.arange(A)[None, :], nxt] = 1.0
        elif mode == "stochastic":
            t = rng.dirichlet(np.ones(S), size=(S, A))
        elif mode == "uniformMixing":
            t = np.full((S, A, S), 1.0 / S)
        else:
            raise ValueError(f"unknown dynamics mode {mode!r}")
        trans.append(t)
    init = np.full(S, 1.0 / S) if mode == "uniformMixing" else rng.dirichlet(np.ones(S))
    return init, trans


def _rewards(rng, shapes, H):
    """Uniform draws on [0, 1/H], rescaled so the per-step maxima sum to exactly 1."""
    raw = [rng.uniform(0.0, 1.0 / H, size=shp) for shp in shapes]
    total = sum(float(r.max()) for r in raw)
    if total == 0:
        return raw
    return [r / total for r in raw]


def gen_perturbed_block(S: int, X: int, A: int, H: int, delta: float,
                        dynamics_mode: str = "stochastic", noise_style: str = "uniform",
                        seed: int = 0):
    """Random delta-perturbed Block MDP with stationary dimensions."""
    if X < S:
        raise ValueError("a block structure needs X >= S")
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    if noise_style not in NOISE_STYLES:
        raise ValueError(f"unknown noise style {noise_style!r}")
    rng = np.random.default_rng(seed)
    decode, block = _block_partition(S, X)
    init, trans = _dynamics(rng, S, A, H, dynamics_mode)
    noises = []
    for _ in range(H):
        if noise_style == "uniform":
            noises.append(np.full((S, X), 1.0 / X))
        else:
            noises.append(rng.dirichlet(np.full(X, 0.5), size=S))
    emit = [(1 - delta) * block + delta * n for n in noises]
    reward = _rewards(rng, [(S, A)] * H, H)
    model = LayeredPomdp(init, trans, emit, reward)
    meta = PerturbedBlockMeta(float(delta), tuple(decode for _ in range(H)),
                              tuple(block for _ in range(H)), tuple(noises), dynamics_mode)
    return model, meta


def gen_noisy_sensor(S: int, H: int, delta: float, dynamics_mode: str = "stochastic",
                     A: int | None = None, seed: int = 0):
    """X = S; the true state is reported w.p. 1 - delta, else a uniformly wrong symbol."""
    if S < 2:
        raise ValueError("the noisy sensor needs S >= 2")
    A = S if A is None else A
    rng = np.random.default_rng(seed)
    init, trans = _dynamics(rng, S, A, H, dynamics_mode)
    block = np.eye(S)
    noise = (1 - block) / (S - 1)
    emit = [(1 - delta) * block + delta * noise for _ in range(H)]
    reward = _rewards(rng, [(S, A)] * H, H)
    model = LayeredPomdp(init, trans, emit, reward)
    meta = PerturbedBlockMeta(float(delta), tuple(np.arange(S) for _ in range(H)),
                              tuple(block for _ in range(H)), tuple(noise for _ in range(H)),
                              dynamics_mode)
    return model, meta


def gen_lower_bound(delta: float, H: int) -> LayeredPomdp:
    """Two states, uniform dynamics, reward 1/H for matching the state, sensor flip rate delta."""
    O = np.array([[1 - delta, delta], [delta, 1 - delta]])
    return LayeredPomdp(
        init=np.full(2, 0.5),
        trans=[np.full((2, 2, 2), 0.5) for _ in range(H - 1)],
        emit=[O] * H,
        reward=[np.eye(2) / H] * H,
    )


def gen_smoothing_toy(seed: int = 0, delta: float = 0.2, n_pairs: int | None = None) -> LayeredPomdp:
    """Horizon-1 instance where smoothing the expert removes action ambiguity.

    States come in confusable pairs ``(2p, 2p+1)``; the sensor reports the
    partner with probability ``delta``.  Actions lie on a line.  With offset
    ``o = 3p`` the good sets are ``{o+2, o+3}`` and ``{o+1, o+2, o+3}``.  The
    plain expert (lowest good action) plays ``o+2`` and ``o+1``; under motor
    noise on a radius-1 ball only ``o+2`` stays robustly good for both states.
    """
    rng = np.random.default_rng(seed)
    if n_pairs is None:
        n_pairs = int(rng.integers(1, 4))
    S = 2 * n_pairs
    A = 3 * n_pairs + 2
    R = np.zeros((S, A))
    for p in range(n_pairs):
        o = 3 * p
        R[2 * p, [o + 2, o + 3]] = 1.0
        R[2 * p + 1, [o + 1, o + 2, o + 3]] = 1.0
    O = np.zeros((S, S))
    for s in range(S):
        O[s, s] = 1 - delta
        O[s, s ^ 1] += delta
    init = rng.dirichlet(np.ones(S))
    return LayeredPomdp(init, [], [O], [R])


def gen_random_pomdp(seed: int, max_dim: int = 4, max_h: int = 4, max_product: int = 20000,
                     sparsity: float = 0.3) -> LayeredPomdp:
    """Random tiny POMDP with per-step dimensions and sparse kernel rows.

    Dimensions shrink (largest first) until the product of ``S*X*A`` over steps
    is at most ``max_product``, which keeps exact enumeration cheap.
    """
    rng = np.random.default_rng(seed)
    H = int(rng.integers(1, max_h + 1))
    dims = rng.integers(1, max_dim + 1, size=(H, 3))
    while np.prod(dims.prod(axis=1).astype(float)) > max_product:
        i = np.unravel_index(np.argmax(dims), dims.shape)
        dims[i] -= 1
    S, X, A = (tuple(int(v) for v in dims[:, j]) for j in range(3))

    def rows(shape):
        w = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
        w = np.where(rng.random(w.shape) < sparsity, 0.0, w)
        flat = w.reshape(-1, shape[-1])
        empty = flat.sum(axis=1) == 0
        flat[empty, rng.integers(0, shape[-1], size=int(empty.sum()))] = 1.0
        return (flat / flat.sum(axis=1, keepdims=True)).reshape(shape)

    init = rows((S[0],))
    trans = [rows((S[h], A[h], S[h + 1])) for h in range(H - 1)]
    emit = [rows((S[h], X[h])) for h in range(H)]
    reward = _rewards(rng, [(S[h], A[h]) for h in range(H)], H)
    return LayeredPomdp(init, trans, emit, reward)


# --------------------------------------------------------------------------
# persistence


def model_to_json(model: LayeredPomdp, meta: PerturbedBlockMeta | None = None) -> dict:
    doc = {
        "horizon": model.horizon,
        "dims": {"S": list(model.n_states), "X": list(model.n_obs), "A": list(model.n_actions)},
        "init": model.init.tolist(),
        "trans": [t.tolist() for t in model.trans],
        "emit": [e.tolist() for e in model.emit],
        "reward": [r.tolist() for r in model.reward],
    }
    if meta is not None:
        doc["meta"] = meta.to_json()
    return doc


def model_from_json(doc: dict):
    try:
        H = int(doc["horizon"])
        dims = doc["dims"]
        model = LayeredPomdp(
            init=np.asarray(doc["init"], dtype=float),
            trans=[np.asarray(t, dtype=float).reshape(dims["S"][h], dims["A"][h], dims["S"][h + 1])
                   for h, t in enumerate(doc["trans"])],
            emit=[np.asarray(e, dtype=float).reshape(dims["S"][h], dims["X"][h])
                  for h, e in enumerate(doc["emit"])],
            reward=[np.asarray(r, dtype=float).reshape(dims["S"][h], dims["A"][h])
                    for h, r in enumerate(doc["reward"])],
        )
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ModelError(f"malformed model document: {e}") from e
    if model.horizon != H or [list(model.n_states), list(model.n_obs), list(model.n_actions)] != \
            [list(dims["S"]), list(dims["X"]), list(dims["A"])]:
        raise ModelError("dimension header disagrees with arrays")
    model = require_valid(renormalized(model))
    meta = PerturbedBlockMeta.from_json(doc["meta"]) if doc.get("meta") else None
    return model, meta


def save_model(model: LayeredPomdp, path, meta: PerturbedBlockMeta | None = None) -> None:
    """Write the model as JSON.  Floats use the shortest repr that round-trips exactly."""
    text = json.dumps(model_to_json(model, meta), indent=1)
    Path(path).write_text(text + "\n")


def load_model(path):
    """Read a model file; returns ``(model, meta_or_None)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ModelError(f"malformed model file: {e}") from e
    return model_from_json(doc)
