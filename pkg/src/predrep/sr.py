"""Successor representation, successor models and jumpy GPC rollouts.

``M[s, j]`` is the expected discounted number of *future* arrivals in ``j``
starting from ``s``, counting from ``s_{t+1}`` onward, so that with the
arrival-reward convention ``V = M @ R`` holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from predrep import _kernels
from predrep.mdp import (
    MDPError,
    TabularMDP,
    check_policy,
    episodic_kernel,
    policy_transition_matrix,
)
from predrep.rng import as_generator
from predrep.tcm import context_update, onehot, sr_td_error, tcm_td_update

NORM_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SRMatrix:
    m: np.ndarray  # M[s, s~]
    gamma: float
    policy_id: str | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.m, dtype=dtype)


@dataclass(frozen=True, eq=False)
class ActionSR:
    m: np.ndarray  # M[s, a, s~]
    gamma: float
    policy_id: str | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.m, dtype=dtype)


@dataclass(frozen=True, eq=False)
class SuccessorModel:
    mu: np.ndarray  # mu[s, s~] or mu[s, a, s~]
    gamma: float
    policy_id: str | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.mu, dtype=dtype)


@dataclass
class GPCEstimate:
    value: float
    se: float
    samples: np.ndarray


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def sr_closed_form(mdp: TabularMDP, policy, policy_id: str | None = None) -> SRMatrix:
    """``M = P (I - gamma P)^-1`` with ``P`` the episodic policy kernel."""
    P = episodic_kernel(mdp, policy)
    A = np.eye(mdp.n_states) - mdp.gamma * P
    M = np.linalg.solve(A, P)  # P commutes with (I - gamma P)^-1
    return SRMatrix(_frozen(M), mdp.gamma, policy_id)


def sr_bellman_residual(mdp: TabularMDP, policy, sr) -> np.ndarray:
    """``M - P (I + gamma M)``; zero at the exact SR."""
    P = episodic_kernel(mdp, policy)
    M = np.asarray(sr, dtype=float)
    return M - P @ (np.eye(mdp.n_states) + mdp.gamma * M)


def sr_action_closed_form(mdp: TabularMDP, policy, policy_id: str | None = None) -> ActionSR:
    """``M[s, a] = sum_s' T(s'|s,a) (e_s' + gamma M(s'))``; terminal rows are zero."""
    M = sr_closed_form(mdp, policy).m
    cont = np.where(mdp.terminal_mask, 0.0, 1.0)
    target = np.eye(mdp.n_states) + mdp.gamma * cont[:, None] * M
    MA = np.einsum("sat,tj->saj", mdp.transition, target)
    MA[mdp.terminal_mask] = 0.0
    return ActionSR(_frozen(MA), mdp.gamma, policy_id)


def marginalize_action_sr(action_sr, policy) -> np.ndarray:
    MA = np.asarray(action_sr, dtype=float)
    pi = check_policy(policy)
    return np.einsum("sa,saj->sj", pi, MA)


def value_from_sr(sr, reward) -> np.ndarray:
    """``V = M R`` for an :class:`SRMatrix`, ``Q = M R`` for an :class:`ActionSR`."""
    M = np.asarray(sr, dtype=float)
    R = np.asarray(reward, dtype=float)
    if R.ndim != 1 or M.shape[-1] != R.shape[0]:
        raise MDPError(f"SR with {M.shape[-1]} columns cannot weight reward of shape {R.shape}")
    return M @ R


def successor_model(sr, tol: float = NORM_TOL) -> SuccessorModel:
    """Normalize an SR into a successor model ``mu = (1 - gamma) M``.

    Raises :class:`MDPError` when a row does not sum to one, which flags an
    unconverged SR or an episodic (terminating) MDP.
    """
    if not isinstance(sr, (SRMatrix, ActionSR)):
        raise TypeError("successor_model needs an SRMatrix or ActionSR (gamma is required)")
    mu = (1.0 - sr.gamma) * np.asarray(sr.m, dtype=float)
    err = np.max(np.abs(mu.sum(axis=-1) - 1.0))
    if err > tol:
        raise MDPError(f"SR rows are not normalized (max deviation {err:.3g})")
    if np.any(mu < -tol):
        raise MDPError("SR has negative entries")
    return SuccessorModel(_frozen(np.clip(mu, 0.0, None)), sr.gamma, sr.policy_id)


def sm_bellman_residual(mdp: TabularMDP, policy, sm) -> np.ndarray:
    """``mu - ((1 - gamma) P + gamma P mu)`` for a state successor model."""
    P = policy_transition_matrix(mdp, policy)
    mu = np.asarray(sm, dtype=float)
    return mu - ((1.0 - mdp.gamma) * P + mdp.gamma * P @ mu)


def sm_value(sm: SuccessorModel, reward) -> np.ndarray:
    """``V = E_mu[R] / (1 - gamma)``."""
    return value_from_sr(sm.mu, reward) / (1.0 - sm.gamma)


def sm_sample(sm: SuccessorModel, s: int, a: int | None = None, rng=None, size=None):
    """Draw discounted-future states from row ``mu[s]`` (or ``mu[s, a]``)."""
    mu = np.asarray(sm.mu)
    if (mu.ndim == 3) != (a is not None):
        raise MDPError("pass an action exactly when the model is action-conditioned")
    row = mu[s] if a is None else mu[s, a]
    rng = as_generator(rng)
    return rng.choice(row.size, size=size, p=row / row.sum())


def td_learning_rate(t, eta0: float = 0.1, tau: float = 1e4):
    """Robbins-Monro schedule ``eta0 / (1 + t / tau)``."""
    return eta0 / (1.0 + np.asarray(t, dtype=float) / tau)


def sr_row_update(m, s: int, s_next: int, eta: float, gamma: float, terminal: bool = False):
    """Plain one-row SR TD update: ``M[s] += eta * delta_M``."""
    m = np.array(m, dtype=float)
    m[s] += eta * sr_td_error(m, s, s_next, gamma, terminal)
    return m


def sr_td_step(
    m,
    s: int,
    s_next: int,
    eta: float,
    gamma: float,
    omega: float = 1.0,
    trace=None,
    terminal: bool = False,
):
    """One SR TD step with a drifting-context eligibility trace.

    The trace is advanced with the temporal-context recursion
    ``c <- (1 - omega) c + omega e_s`` and every row ``i`` moves by
    ``eta * c[i] * delta_M``.  With ``omega = 1`` only row ``s`` changes.
    Returns ``(m_new, trace_new)``.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    trace = np.zeros(n) if trace is None else trace
    c = context_update(trace, onehot(s, n), omega)
    return tcm_td_update(m, s, s_next, c, eta, gamma, terminal), c


def _start_distribution(mdp: TabularMDP, start) -> np.ndarray:
    if start is None:
        p0 = np.where(mdp.terminal_mask, 0.0, 1.0)
    elif np.ndim(start) == 0:
        p0 = onehot(int(start), mdp.n_states)
    else:
        p0 = np.asarray(start, dtype=float)
    if p0.sum() <= 0:
        raise MDPError("start distribution has no mass")
    return p0 / p0.sum()


def _init_sr(n: int, init) -> np.ndarray:
    if isinstance(init, str):
        if init == "zeros":
            return np.zeros((n, n))
        if init == "identity":
            return np.eye(n)
        raise ValueError(f"unknown init {init!r}")
    return np.array(init, dtype=float)


def learn_sr_td(
    mdp: TabularMDP,
    policy,
    n_steps: int,
    rng=None,
    eta0: float = 0.1,
    tau: float = 1e4,
    per_visit: bool = False,
    omega: float = 1.0,
    init="zeros",
    start=None,
    backend: str = "numba",
) -> np.ndarray:
    """Learn ``M`` by on-policy TD over one continuous stream of ``n_steps``.

    Episodes restart from ``start`` (default uniform over non-terminal
    states) after a terminal arrival; the trace is cleared on restart.
    The step size is ``eta0 / (1 + t / tau)`` with ``t`` the global step,
    or the visit count of the current state when ``per_visit`` is set.
    ``backend="python"`` runs :func:`sr_td_step` step by step on the same
    uniforms and exists to cross-check the compiled kernel.
    """
    rng = as_generator(rng)
    P = policy_transition_matrix(mdp, policy)
    p0 = _start_distribution(mdp, start)
    cdf_p, cdf_0 = _kernels.cumulative(P), _kernels.cumulative(p0)
    s0 = int(np.searchsorted(cdf_0, rng.random(), side="right"))
    u = rng.random((n_steps, 2))
    m = _init_sr(mdp.n_states, init)
    if backend == "numba":
        _kernels.sr_td_stream(
            m, cdf_p, cdf_0, np.asarray(mdp.terminal_mask), u, eta0, tau, mdp.gamma, omega, s0, per_visit
        )
        return m
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")
    visits = np.zeros(mdp.n_states)
    s, c = s0, None
    for t in range(n_steps):
        s2 = min(int(np.searchsorted(cdf_p[s], u[t, 0], side="right")), mdp.n_states - 1)
        term = bool(mdp.terminal_mask[s2])
        eta = eta0 / (1.0 + (visits[s] if per_visit else t) / tau)
        visits[s] += 1.0
        m, c = sr_td_step(m, s, s2, eta, mdp.gamma, omega, c, term)
        if term:
            s, c = int(np.searchsorted(cdf_0, u[t, 1], side="right")), None
        else:
            s = s2
    return m


def gpc_rollout(
    sm_short,
    sm_long: SuccessorModel,
    policies,
    start,
    n_samples: int,
    reward,
    rng=None,
) -> GPCEstimate:
    """Geometric policy composition estimate of ``Q(s0, a0)``.

    ``policies`` is ``pi_1..pi_n``; ``sm_short`` holds the action-conditioned
    successor models of ``pi_1..pi_{n-1}`` at the short horizon ``beta`` and
    ``sm_long`` the action-conditioned model of ``pi_n`` at ``gamma``.  Each
    sample jumps ``s_1 ~ mu_beta^{pi_1}(.|s0, a0)``, then for ``i < n``
    draws ``a_i ~ pi_{i+1}(.|s_i)`` and jumps with the next model, and
    returns::

        sum_{i<n} c**(i-1) R(s_i) / (1 - beta) + c**(n-1) R(s_n) / (1 - gamma)

    with ``c = (gamma - beta) / (1 - beta)``.  The value being estimated is
    that of the policy which follows ``pi_i`` and, after every step, hands
    over to ``pi_{i+1}`` with probability ``1 - beta / gamma``.
    """
    if isinstance(sm_short, SuccessorModel):
        sm_short = [sm_short]
    sm_short = list(sm_short)
    policies = [check_policy(p) for p in policies]
    n = len(policies)
    if n < 1 or len(sm_short) != n - 1:
        raise MDPError("need n policies and n - 1 short-horizon models")
    gamma = sm_long.gamma
    models = sm_short + [sm_long]
    for sm in models:
        if np.ndim(sm.mu) != 3:
            raise MDPError("GPC needs action-conditioned successor models")
    beta = sm_short[0].gamma if sm_short else gamma
    if any(sm.gamma != beta for sm in sm_short):
        raise MDPError("all short-horizon models must share one beta")
    if beta > gamma:
        raise MDPError(f"beta ({beta}) must not exceed gamma ({gamma})")
    if n_samples < 1:
        raise MDPError("n_samples must be >= 1")
    R = np.asarray(reward, dtype=float)
    rng = as_generator(rng)
    cdfs = [_kernels.cumulative(np.asarray(sm.mu)) for sm in models]
    pol_cdfs = [_kernels.cumulative(p) for p in policies]
    c = (gamma - beta) / (1.0 - beta) if beta < 1.0 else 0.0
    coef = np.array([c**i / (1.0 - beta) for i in range(n - 1)] + [c ** (n - 1) / (1.0 - gamma)])
    s0, a0 = start
    u = rng.random((n_samples, 2 * n))
    out = np.empty(n_samples)
    n_states = R.size
    for k in range(n_samples):
        s, a, g = int(s0), int(a0), 0.0
        for i in range(n):
            s = min(int(np.searchsorted(cdfs[i][s, a], u[k, 2 * i], side="right")), n_states - 1)
            g += coef[i] * R[s]
            if i + 1 < n:
                a = int(np.searchsorted(pol_cdfs[i + 1][s], u[k, 2 * i + 1], side="right"))
        out[k] = g
    se = float(out.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return GPCEstimate(float(out.mean()), se, out)
