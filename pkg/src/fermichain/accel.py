"""Optional numba acceleration of the hot memory-convolution kernel.

The time-convolution of the memory-kernel master equation is the only
custom inner loop in the package that runs millions of times; everything
else is BLAS/LAPACK-bound and gains nothing from jitting.  Set the
environment variable ``FERMICHAIN_NUMBA=0`` to force the pure-numpy path
(useful for debugging or on machines without a working numba install).
``benchmarks/bench_kernels.py`` compares both implementations.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    return os.environ.get("FERMICHAIN_NUMBA", "1").lower() not in ("0", "false", "no")


def history_row_conv_numpy(hist, head, m, site, U, coef):
    """Trapezoid convolution of one history row with the propagator grid.

    Returns sum_{i=0..m} w_i * coef[i] * hist[(head - i) % cap, site, :] @ U[i]
    with trapezoid endpoint weights w_0 = w_m = 1/2 (zero for m == 0).
    """
    if m == 0:
        return np.zeros(hist.shape[1], dtype=np.complex128)
    cap = hist.shape[0]
    idx = (head - np.arange(m + 1)) % cap
    w = coef[: m + 1].astype(np.complex128).copy()
    w[0] *= 0.5
    w[m] *= 0.5
    rows = hist[idx, site, :]
    return np.einsum("i,ia,iab->b", w, rows, U[: m + 1])


def _history_row_conv_loops(hist, head, m, site, U, coef):
    L = hist.shape[1]
    acc = np.zeros(L, dtype=np.complex128)
    if m == 0:
        return acc
    cap = hist.shape[0]
    for i in range(m + 1):
        w = coef[i]
        if i == 0 or i == m:
            w = 0.5 * w
        idx = (head - i) % cap
        for b in range(L):
            s = 0.0 + 0.0j
            for a in range(L):
                s += hist[idx, site, a] * U[i, a, b]
            acc[b] += w * s
    return acc


NUMBA_ENABLED = False
history_row_conv_jit = None

if _numba_requested():
    try:
        import numba

        history_row_conv_jit = numba.njit(cache=True)(_history_row_conv_loops)
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised only without numba
        NUMBA_ENABLED = False

history_row_conv = history_row_conv_jit if NUMBA_ENABLED else history_row_conv_numpy
