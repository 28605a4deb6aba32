"""Compiled inner loops for the SDE ensemble stepping.

Each replication is independent, so the parallel loop is bitwise deterministic
regardless of thread count.  Basis values cos(k x), sin(k x) are built by the
angle-addition recurrence from cos(x), sin(x); occupation integrals use the
same trapezoid update as the pure-numpy path.

dynamics.py checks HAVE_NUMBA before dispatching here.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco

    prange = range


TWO_PI = 2.0 * np.pi


@njit(parallel=True, cache=True)
def steps_interacting(pos, acc_c, acc_s, eps, n_steps, dt, norm0, ka, active):
    """Self-interacting drift: -(1/norm) sum_j ka[j] (accS_j cos_j - accC_j sin_j)."""
    R, K = acc_c.shape
    n_act = active.shape[0]
    sqdt = np.sqrt(dt)
    half = 0.5 * dt
    for r in prange(R):
        x = pos[r]
        ck = np.empty(K)
        sk = np.empty(K)
        c = np.cos(x)
        s = np.sin(x)
        cf = c
        sf = s
        for k in range(K):
            ck[k] = cf
            sk[k] = sf
            t = cf * c - sf * s
            sf = sf * c + cf * s
            cf = t
        for step in range(n_steps):
            drift = 0.0
            for j in range(n_act):
                a = active[j]
                drift += ka[j] * (acc_s[r, a] * ck[a] - acc_c[r, a] * sk[a])
            drift /= -(norm0 + step * dt)
            x = (x + drift * dt + sqdt * eps[r, step]) % TWO_PI
            c = np.cos(x)
            s = np.sin(x)
            cf = c
            sf = s
            for k in range(K):
                acc_c[r, k] += half * (ck[k] + cf)
                acc_s[r, k] += half * (sk[k] + sf)
                ck[k] = cf
                sk[k] = sf
                t = cf * c - sf * s
                sf = sf * c + cf * s
                cf = t
        pos[r] = x


@njit(parallel=True, cache=True)
def steps_frozen_drift(pos, acc_c, acc_s, eps, n_steps, dt, wc, ws, active):
    """Time-constant drift from a fixed potential: sum_j wc_j cos_j + ws_j sin_j."""
    R, K = acc_c.shape
    n_act = active.shape[0]
    sqdt = np.sqrt(dt)
    half = 0.5 * dt
    for r in prange(R):
        x = pos[r]
        ck = np.empty(K)
        sk = np.empty(K)
        c = np.cos(x)
        s = np.sin(x)
        cf = c
        sf = s
        for k in range(K):
            ck[k] = cf
            sk[k] = sf
            t = cf * c - sf * s
            sf = sf * c + cf * s
            cf = t
        for step in range(n_steps):
            drift = 0.0
            for j in range(n_act):
                a = active[j]
                drift += wc[j] * ck[a] + ws[j] * sk[a]
            x = (x + drift * dt + sqdt * eps[r, step]) % TWO_PI
            c = np.cos(x)
            s = np.sin(x)
            cf = c
            sf = s
            for k in range(K):
                acc_c[r, k] += half * (ck[k] + cf)
                acc_s[r, k] += half * (sk[k] + sf)
                ck[k] = cf
                sk[k] = sf
                t = cf * c - sf * s
                sf = sf * c + cf * s
                cf = t
        pos[r] = x
