import numpy as np

from pomdplab import LayeredPomdp, WindowPolicy


def greedy_obs(model):
    """a_h = x_h."""
    return WindowPolicy(1, False, [{((x,), ()): np.eye(model.n_actions[h])[x]
                                    for x in range(model.n_obs[h])} for h in range(model.horizon)],
                        model.n_actions)


def deterministic_chain(H=3, S=3, A=2):
    """Point-mass kernels everywhere; state and observation follow s -> s + 1 mod S."""
    init = np.eye(S)[0]
    step = np.zeros((S, A, S))
    for s in range(S):
        step[s, :, (s + 1) % S] = 1.0
    reward = [np.full((S, A), 1.0 / (H * 2)) for _ in range(H)]
    return LayeredPomdp(init, [step] * (H - 1), [np.eye(S)] * H, reward)


def uniform_model(H=1, S=2, X=2, A=2, reward=0.0):
    return LayeredPomdp(np.full(S, 1 / S), [np.full((S, A, S), 1 / S)] * (H - 1),
                        [np.full((S, X), 1 / X)] * H, [np.full((S, A), reward)] * H)
