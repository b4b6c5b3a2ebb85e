"""Temporal context model: drifting context, Hebbian and error-driven
association learning, and sampling-based value estimation from the
learned associations.

Association matrices are laid out cue-by-item: row ``i`` is the context
(cue) dimension, column ``j`` the predicted item.  Retrieval from a
context ``c`` therefore weights items by ``c @ m_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from predrep.rng import as_generator


def context_update(c, phi, omega: float) -> np.ndarray:
    """``c <- (1 - omega) c + omega phi``."""
    c = np.asarray(c, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if c.shape != phi.shape:
        raise ValueError(f"context {c.shape} and features {phi.shape} differ in shape")
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    if omega == 1.0:
        return phi.copy()
    if omega == 0.0:
        return c.copy()
    return (1.0 - omega) * c + omega * phi


def onehot(i: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[i] = 1.0
    return v


def tcm_hebbian_update(m_hat, phi, c, rate: float) -> np.ndarray:
    """Outer-product Hebbian binding: ``m_hat[i, j] += rate * c[i] * phi[j]``."""
    m_hat = np.asarray(m_hat, dtype=float)
    return m_hat + rate * np.outer(c, phi)


def sr_td_error(m_hat, s: int, s_next: int, gamma: float, terminal: bool = False) -> np.ndarray:
    """Vector TD error ``I[s'=.] + gamma M(s', .) - M(s, .)``."""
    delta = -m_hat[s].copy()
    delta[s_next] += 1.0
    if not terminal:
        delta += gamma * m_hat[s_next]
    return delta


def tcm_td_update(
    m_hat,
    s: int,
    s_next: int,
    c,
    rate: float,
    gamma: float,
    terminal: bool = False,
    salience=None,
) -> np.ndarray:
    """Error-driven association update ``m_hat[i, j] += rate * c[i] * delta(j)``.

    ``salience`` is an optional per-item multiplier on ``rate`` applied
    according to the arriving item ``s_next``.
    """
    m_hat = np.asarray(m_hat, dtype=float)
    delta = sr_td_error(m_hat, s, s_next, gamma, terminal)
    if salience is not None:
        rate = rate * float(salience[s_next])
    return m_hat + rate * np.outer(c, delta)


@dataclass
class SampleEstimate:
    value: float
    se: float
    samples: np.ndarray
    n_clamped: int = 0
    fallback: bool = False


def _sampling_weights(c, m_hat):
    w = c @ m_hat
    neg = int(np.count_nonzero(w < 0))
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        return np.full(w.size, 1.0 / w.size), 0.0, neg, True
    return w / total, total, neg, False


def tcm_sr_evaluate(
    m_hat,
    reward,
    query: int,
    omega: float,
    gamma: float,
    n_samples: int,
    depth: int = 1,
    rng=None,
    c0=None,
    features=None,
) -> SampleEstimate:
    """Monte Carlo value estimate by recursive retrieval from ``m_hat``.

    Each of ``n_samples`` retrieval chains starts from context ``c0``
    (default ``phi(query)``) and draws ``depth`` items, item ``tau`` with
    probability proportional to ``c_{tau-1} @ m_hat``; the context then
    drifts toward the drawn item with rate ``omega``.

    The chain return is ``sum_tau w_tau * mass_tau * R(item_tau)`` where
    ``mass_tau`` is the total retrieval weight and
    ``w_tau = omega * gamma**(tau-1) + (1 - omega) / depth``.  At
    ``omega = 0`` every draw is an i.i.d. sample of the normalized row and
    the estimator is unbiased for ``m_hat[query] @ R``.  At ``omega = 1``
    with ``m_hat`` a one-step transition matrix the chain is a rollout and
    the return is its ``depth``-truncated discounted sum.  Intermediate
    values interpolate without any unbiasedness claim.
    """
    m_hat = np.asarray(m_hat, dtype=float)
    reward = np.asarray(reward, dtype=float)
    n = m_hat.shape[1]
    if n_samples < 1 or depth < 1:
        raise ValueError("n_samples and depth must be >= 1")
    phi = np.eye(n) if features is None else np.asarray(features, dtype=float)
    rng = as_generator(rng)
    start = phi[query] if c0 is None else np.asarray(c0, dtype=float)
    weights = omega * gamma ** np.arange(depth) + (1.0 - omega) / depth
    returns = np.empty(n_samples)
    n_clamped = 0
    fallback = False
    for k in range(n_samples):
        c = start.copy()
        g = 0.0
        for tau in range(depth):
            p, mass, neg, fb = _sampling_weights(c, m_hat)
            n_clamped += neg
            fallback |= fb
            item = int(rng.choice(n, p=p))
            g += weights[tau] * mass * reward[item]
            c = context_update(c, phi[item], omega)
        returns[k] = g
    se = float(returns.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return SampleEstimate(float(returns.mean()), se, returns, n_clamped, fallback)
