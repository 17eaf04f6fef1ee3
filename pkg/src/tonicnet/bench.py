"""Benchmark the numba GRU kernels against the pure-numpy fallback.

Usage: python -m tonicnet.bench [T]

Times full-sequence forward+backward passes of one 256-unit layer at the
model's real dimensions for a sequence of T steps (default 1500, roughly
the mean corpus length).
"""

from __future__ import annotations

import sys
import time

import numpy as np

from . import kernels


def _run(fwd, bwd, xp, h0, w_ur, w_c, repeats: int = 5) -> float:
    w_ur_t = np.ascontiguousarray(w_ur.T)
    w_c_t = np.ascontiguousarray(w_c.T)
    d = np.ones((xp.shape[0], h0.shape[0]), dtype=xp.dtype)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        h_out, u, r, c, _rh = fwd(xp, h0, w_ur, w_c)
        bwd(d, h_out, h0, u, r, c, w_ur_t, w_c_t)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    T = int(argv[0]) if argv else 1500
    H, D = 256, 288
    rng = np.random.default_rng(0)
    scale = 1.0 / np.sqrt(H)
    xp = (rng.standard_normal((T, 3 * H)) * scale).astype(np.float32)
    h0 = np.zeros(H, dtype=np.float32)
    w_ur = np.ascontiguousarray((rng.standard_normal((H, 2 * H)) * scale).astype(np.float32))
    w_c = np.ascontiguousarray((rng.standard_normal((H, H)) * scale).astype(np.float32))

    t_np = _run(kernels.gru_forward_numpy, kernels.gru_backward_numpy, xp, h0, w_ur, w_c)
    print(f"pure numpy : {t_np * 1e3:8.1f} ms  (T={T}, H={H}, input {D})")
    if kernels.USE_NUMBA:
        _run(kernels.gru_forward, kernels.gru_backward, xp, h0, w_ur, w_c, repeats=1)  # warm JIT
        t_nb = _run(kernels.gru_forward, kernels.gru_backward, xp, h0, w_ur, w_c)
        print(f"numba njit : {t_nb * 1e3:8.1f} ms  ({t_np / t_nb:.2f}x)")
    else:
        print("numba path disabled (TONICNET_NUMBA=0)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
