"""Hot GRU kernels: full-sequence forward and backward recurrences.

Both kernels exist in two flavours: numba @njit (default) and pure numpy.
Set TONICNET_NUMBA=0 to force the numpy path; `python -m tonicnet.bench`
compares the two. The recurrence follows the standard GRU cell

    u = sigmoid(xu + h @ Wh_u)          (update gate)
    r = sigmoid(xr + h @ Wh_r)          (reset gate)
    c = tanh(xc + (r * h) @ Wh_c)       (candidate)
    h' = (1 - u) * h + u * c

where xu/xr/xc are input projections (input @ Wx + b) precomputed for the
whole sequence as one matmul, so the per-step loop only touches the
hidden-to-hidden weights. Gate order in all stacked (.., 3H) arrays is
update, reset, candidate.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("TONICNET_NUMBA", "1").lower() not in ("0", "false", "off")


def _gru_forward(xp, h0, w_ur, w_c):
    """Run one GRU layer over a sequence.

    xp:   (T, 3H) input projections incl. bias
    h0:   (H,) initial hidden state
    w_ur: (H, 2H) hidden weights for update|reset gates
    w_c:  (H, H) hidden weights for the candidate

    Returns (h_out, u, r, c, rh), each (T, H); rh is r * h_prev, saved for
    the backward pass.
    """
    T = xp.shape[0]
    H = h0.shape[0]
    one = xp.dtype.type(1.0)  # keeps float32 inputs in float32 under numba
    h_out = np.empty((T, H), dtype=xp.dtype)
    u_all = np.empty((T, H), dtype=xp.dtype)
    r_all = np.empty((T, H), dtype=xp.dtype)
    c_all = np.empty((T, H), dtype=xp.dtype)
    rh_all = np.empty((T, H), dtype=xp.dtype)
    h = h0.copy()
    for t in range(T):
        hur = np.dot(h, w_ur)
        u = one / (one + np.exp(-(xp[t, :H] + hur[:H])))
        r = one / (one + np.exp(-(xp[t, H : 2 * H] + hur[H:])))
        rh = r * h
        c = np.tanh(xp[t, 2 * H :] + np.dot(rh, w_c))
        h = (one - u) * h + u * c
        u_all[t] = u
        r_all[t] = r
        c_all[t] = c
        rh_all[t] = rh
        h_out[t] = h
    return h_out, u_all, r_all, c_all, rh_all


def _gru_backward(d_h_out, h_out, h0, u_all, r_all, c_all, w_ur_t, w_c_t):
    """Backward pass of `_gru_forward`.

    d_h_out: (T, H) gradient w.r.t. every per-step output
    w_ur_t:  (2H, H) transpose of w_ur (C-contiguous)
    w_c_t:   (H, H) transpose of w_c (C-contiguous)

    Returns (d_xp, d_h0, d_rh) where d_xp is (T, 3H) gradient w.r.t. the
    input projections and d_rh (T, H) the gradient w.r.t. r*h_prev (used
    outside the loop to form the candidate weight gradient).
    """
    T, H = d_h_out.shape
    one = d_h_out.dtype.type(1.0)
    d_xp = np.empty((T, 3 * H), dtype=d_h_out.dtype)
    d_rh = np.empty((T, H), dtype=d_h_out.dtype)
    g = np.zeros(H, dtype=d_h_out.dtype)
    d_ur = np.empty(2 * H, dtype=d_h_out.dtype)
    for t in range(T - 1, -1, -1):
        g = g + d_h_out[t]
        h_prev = h0 if t == 0 else h_out[t - 1]
        u = u_all[t]
        r = r_all[t]
        c = c_all[t]
        dc_pre = g * u * (one - c * c)
        du_pre = g * (c - h_prev) * u * (one - u)
        drh = np.dot(dc_pre, w_c_t)
        dr_pre = drh * h_prev * r * (one - r)
        d_ur[:H] = du_pre
        d_ur[H:] = dr_pre
        g = g * (one - u) + drh * r + np.dot(d_ur, w_ur_t)
        d_xp[t, :H] = du_pre
        d_xp[t, H : 2 * H] = dr_pre
        d_xp[t, 2 * H :] = dc_pre
        d_rh[t] = dc_pre
    return d_xp, g, d_rh


def _jit(fn):
    from numba import njit

    return njit(cache=True, fastmath=True)(fn)


if USE_NUMBA:
    gru_forward = _jit(_gru_forward)
    gru_backward = _jit(_gru_backward)
else:
    gru_forward = _gru_forward
    gru_backward = _gru_backward

# Kept importable for benchmarking regardless of the active path.
gru_forward_numpy = _gru_forward
gru_backward_numpy = _gru_backward
