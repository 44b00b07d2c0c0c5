"""Numpy reference for the LSTM time loop.

Gate layout along the last axis is ``[input, forget, candidate, output]``,
each block ``units`` wide. ``xproj`` is ``x @ kernel + bias`` for every step,
computed outside the loop since it has no sequential dependency.
"""
import numpy as np


def sigmoid(z):
    # tanh form never overflows
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def lstm_forward(xproj, recurrent):
    """Run the recurrence from zero states.

    Returns ``(hs, cs, acts)`` with shapes ``(B, T, u)``, ``(B, T, u)`` and
    ``(B, T, 4u)``; ``acts`` holds the post-activation gate values needed by
    :func:`lstm_backward`.
    """
    batch, steps, width = xproj.shape
    u = width // 4
    dtype = xproj.dtype
    hs = np.empty((batch, steps, u), dtype=dtype)
    cs = np.empty((batch, steps, u), dtype=dtype)
    acts = np.empty((batch, steps, width), dtype=dtype)
    h = np.zeros((batch, u), dtype=dtype)
    c = np.zeros((batch, u), dtype=dtype)
    for t in range(steps):
        z = xproj[:, t] + h @ recurrent
        a = acts[:, t]
        a[:, : 2 * u] = sigmoid(z[:, : 2 * u])
        a[:, 2 * u : 3 * u] = np.tanh(z[:, 2 * u : 3 * u])
        a[:, 3 * u :] = sigmoid(z[:, 3 * u :])
        c = a[:, u : 2 * u] * c + a[:, :u] * a[:, 2 * u : 3 * u]
        h = a[:, 3 * u :] * np.tanh(c)
        cs[:, t] = c
        hs[:, t] = h
    return hs, cs, acts


def lstm_backward(dhs, hs, cs, acts, recurrent):
    """Backpropagate through time.

    Returns ``(dxproj, drecurrent)``; the caller maps ``dxproj`` back onto the
    input kernel, bias and inputs.
    """
    batch, steps, u = dhs.shape
    dtype = dhs.dtype
    dxproj = np.empty((batch, steps, 4 * u), dtype=dtype)
    drec = np.zeros_like(recurrent)
    dh_next = np.zeros((batch, u), dtype=dtype)
    dc_next = np.zeros((batch, u), dtype=dtype)
    zeros = np.zeros((batch, u), dtype=dtype)
    for t in range(steps - 1, -1, -1):
        a = acts[:, t]
        i, f, g, o = a[:, :u], a[:, u : 2 * u], a[:, 2 * u : 3 * u], a[:, 3 * u :]
        dh = dhs[:, t] + dh_next
        tc = np.tanh(cs[:, t])
        dc = dc_next + dh * o * (1.0 - tc * tc)
        c_prev = cs[:, t - 1] if t > 0 else zeros
        h_prev = hs[:, t - 1] if t > 0 else zeros
        dz = dxproj[:, t]
        dz[:, :u] = dc * g * i * (1.0 - i)
        dz[:, u : 2 * u] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * u : 3 * u] = dc * i * (1.0 - g * g)
        dz[:, 3 * u :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        drec += h_prev.T @ dz
        dh_next = dz @ recurrent.T
    return dxproj, drec
