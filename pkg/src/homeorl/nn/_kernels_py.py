"""Pure-numpy recurrent kernels; reference for the compiled versions.

Gate layout along the last axis is ``[input, forget, cell, output]``.
``keep[t, b]`` is 0 where a new episode starts at step ``t`` (the carried
state is zeroed before the step) and 1 otherwise.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(xproj, w_hh, h0, c0, keep):
    """Run the cell over ``T`` steps.

    Returns ``(hs, cs, gates, h_prev, c_prev)``; ``gates`` holds the activated
    gate values and ``h_prev``/``c_prev`` the masked incoming state per step,
    which is everything the backward pass needs.
    """
    T, B, G = xproj.shape
    H = G // 4
    hs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    gates = np.empty((T, B, G))
    h_prev = np.empty((T, B, H))
    c_prev = np.empty((T, B, H))
    h = np.array(h0, dtype=np.float64)
    c = np.array(c0, dtype=np.float64)
    for t in range(T):
        k = keep[t][:, None]
        h = h * k
        c = c * k
        h_prev[t] = h
        c_prev[t] = c
        z = xproj[t] + h @ w_hh
        gt = gates[t]
        gt[:, :H] = _sigmoid(z[:, :H])
        gt[:, H:2 * H] = _sigmoid(z[:, H:2 * H])
        gt[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        gt[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
        c = gt[:, H:2 * H] * c + gt[:, :H] * gt[:, 2 * H:3 * H]
        h = gt[:, 3 * H:] * np.tanh(c)
        cs[t] = c
        hs[t] = h
    return hs, cs, gates, h_prev, c_prev


def lstm_backward(dhs, cs, gates, h_prev, c_prev, keep, w_hh):
    """Backpropagate through time. Returns ``(dxproj, dw_hh)``.

    The initial state is treated as a constant, and gradients are cut at
    every ``keep == 0`` boundary.
    """
    T, B, H = dhs.shape
    dxproj = np.empty((T, B, 4 * H))
    dw_hh = np.zeros_like(w_hh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        g = gates[t]
        i = g[:, :H]
        f = g[:, H:2 * H]
        gg = g[:, 2 * H:3 * H]
        o = g[:, 3 * H:]
        tc = np.tanh(cs[t])
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dxproj[t]
        dz[:, :H] = dc * gg * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev[t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dw_hh += h_prev[t].T @ dz
        k = keep[t][:, None]
        dh_next = (dz @ w_hh.T) * k
        dc_next = dc * f * k
    return dxproj, dw_hh


def gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimates over time-major ``(T, B)`` arrays.

    ``dones[t]`` is 1 when the transition at ``t`` ended its episode, so
    nothing is bootstrapped across it.
    """
    T = rewards.shape[0]
    adv = np.zeros_like(rewards, dtype=np.float64)
    last = np.zeros(rewards.shape[1:])
    for t in range(T - 1, -1, -1):
        next_v = last_value if t == T - 1 else values[t + 1]
        nonterm = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_v * nonterm - values[t]
        last = delta + gamma * lam * nonterm * last
        adv[t] = last
    return adv
