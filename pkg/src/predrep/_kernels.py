"""Compiled inner loops for long on-policy TD streams.

Every kernel consumes a pre-drawn matrix of uniforms so that the random
stream is produced by the caller's numpy Generator and the compiled code is
deterministic.  The pure-Python learners in :mod:`predrep.sr` and
:mod:`predrep.sf` consume the same uniforms and are used to cross-check
these kernels.

With ``per_visit`` set, the step size decays with the visit count of the
updated row (state for the SR, state-action pair for SFs) instead of the
global step index, so rarely visited rows are not starved.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def cumulative(p: np.ndarray) -> np.ndarray:
    """Row-wise CDF with the last entry pinned to 1 (guards against roundoff)."""
    c = np.cumsum(np.asarray(p, dtype=float), axis=-1)
    c[..., -1] = 1.0
    return np.ascontiguousarray(c)


@njit(cache=True)
def draw(cdf, u):
    i = np.searchsorted(cdf, u, side="right")
    if i >= cdf.size:
        i = cdf.size - 1
    return i


@njit(cache=True)
def sr_td_stream(m, cdf_next, cdf_start, terminal, u, eta0, tau, gamma, omega, s0, per_visit):
    """In-place SR TD with a drifting context trace over ``u.shape[0]`` steps.

    Returns the final state so streams can be continued.
    """
    n = m.shape[0]
    c = np.zeros(n)
    delta = np.empty(n)
    visits = np.zeros(n)
    s = s0
    for t in range(u.shape[0]):
        s2 = draw(cdf_next[s], u[t, 0])
        if per_visit:
            eta = eta0 / (1.0 + visits[s] / tau)
            visits[s] += 1.0
        else:
            eta = eta0 / (1.0 + t / tau)
        if omega == 1.0:
            c[:] = 0.0
            c[s] = 1.0
        else:
            for i in range(n):
                c[i] *= 1.0 - omega
            c[s] += omega
        boot = 0.0 if terminal[s2] else gamma
        for j in range(n):
            delta[j] = boot * m[s2, j] - m[s, j]
        delta[s2] += 1.0
        for i in range(n):
            if c[i] != 0.0:
                w = eta * c[i]
                for j in range(n):
                    m[i, j] += w * delta[j]
        if terminal[s2]:
            s = draw(cdf_start, u[t, 1])
            c[:] = 0.0
        else:
            s = s2
    return s


@njit(cache=True)
def sf_td_stream(psi, phi, cdf_pi, cdf_t, cdf_start, terminal, u, eta0, tau, gamma, s0, a0, per_visit):
    """In-place SARSA-style SF TD: ``psi[s,a] += eta (phi(s') + gamma psi[s',a'] - psi[s,a])``."""
    k = psi.shape[2]
    visits = np.zeros((psi.shape[0], psi.shape[1]))
    s = s0
    a = a0
    for t in range(u.shape[0]):
        s2 = draw(cdf_t[s, a], u[t, 0])
        a2 = draw(cdf_pi[s2], u[t, 1])
        if per_visit:
            eta = eta0 / (1.0 + visits[s, a] / tau)
            visits[s, a] += 1.0
        else:
            eta = eta0 / (1.0 + t / tau)
        boot = 0.0 if terminal[s2] else gamma
        for j in range(k):
            psi[s, a, j] += eta * (phi[s2, j] + boot * psi[s2, a2, j] - psi[s, a, j])
        if terminal[s2]:
            s = draw(cdf_start, u[t, 2])
            a = draw(cdf_pi[s], u[t, 3])
        else:
            s = s2
            a = a2
    return s
