"""Successor features, generalized policy improvement and the Option Keyboard."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from predrep import _kernels
from predrep.mdp import MDPError, TabularMDP, check_policy, episodic_kernel
from predrep.rng import as_generator
from predrep.sr import _start_distribution, _frozen


@dataclass(frozen=True, eq=False)
class FeatureMap:
    phi: np.ndarray  # phi[s, k]

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 2 or not np.all(np.isfinite(phi)):
            raise MDPError("features must be a finite (S, K) matrix")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]

    @classmethod
    def onehot(cls, n_states: int) -> "FeatureMap":
        return cls(np.eye(n_states))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.phi, dtype=dtype)


@dataclass(frozen=True, eq=False)
class SFTensor:
    psi: np.ndarray  # psi[s, a, k]
    gamma: float
    policy_id: str | None = None
    policy: np.ndarray | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.psi, dtype=dtype)

    @property
    def n_actions(self) -> int:
        return self.psi.shape[1]


@dataclass
class TaskFit:
    w: np.ndarray
    residual: float


def fit_task_weights(features, states, rewards, ridge: float = 1e-8) -> TaskFit:
    """Least-squares ``w`` minimizing ``||r - phi(s) w||^2 + ridge ||w||^2``."""
    phi = np.asarray(features, dtype=float)
    X = phi[np.asarray(states, dtype=int)]
    r = np.asarray(rewards, dtype=float)
    if X.shape[0] != r.shape[0]:
        raise MDPError("states and rewards differ in length")
    k = X.shape[1]
    if ridge <= 0.0 and np.linalg.matrix_rank(X) < k:
        raise MDPError("rank-deficient feature design; enable ridge regularization")
    w = np.linalg.solve(X.T @ X + ridge * np.eye(k), X.T @ r)
    return TaskFit(w, float(np.sum((r - X @ w) ** 2)))


def _state_sf(mdp: TabularMDP, policy, phi: np.ndarray) -> np.ndarray:
    P = episodic_kernel(mdp, policy)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P, P @ phi)


def sf_closed_form(mdp: TabularMDP, policy, features, policy_id: str | None = None) -> SFTensor:
    """``Psi[s, a] = sum_s' T(s'|s,a) (phi(s') + gamma E_{a'~pi} Psi[s', a'])``."""
    pi = check_policy(policy, mdp)
    phi = np.asarray(features, dtype=float)
    if phi.shape[0] != mdp.n_states:
        raise MDPError("feature map does not cover the MDP's states")
    psi_state = _state_sf(mdp, pi, phi)  # zero rows at terminals
    psi = np.einsum("sat,tk->sak", mdp.transition, phi + mdp.gamma * psi_state)
    psi[mdp.terminal_mask] = 0.0
    return SFTensor(_frozen(psi), mdp.gamma, policy_id, _frozen(pi))


def sf_bellman_residual(mdp: TabularMDP, policy, features, sf) -> np.ndarray:
    pi = check_policy(policy, mdp)
    phi = np.asarray(features, dtype=float)
    psi = np.asarray(sf, dtype=float)
    cont = np.where(mdp.terminal_mask, 0.0, 1.0)
    nxt = np.einsum("sa,sak->sk", pi, psi) * cont[:, None]
    target = np.einsum("sat,tk->sak", mdp.transition, phi + mdp.gamma * nxt)
    target[mdp.terminal_mask] = 0.0
    return psi - target


def sf_td_step(psi, s, a, s_next, a_next, features, eta, gamma, terminal: bool = False):
    """Single-row SF TD update; returns a new array."""
    psi = np.array(psi, dtype=float)
    phi = np.asarray(features, dtype=float)
    target = phi[s_next] + (0.0 if terminal else gamma) * psi[s_next, a_next]
    psi[s, a] += eta * (target - psi[s, a])
    return psi


def learn_sf_td(
    mdp: TabularMDP,
    policy,
    features,
    n_steps: int,
    rng=None,
    eta0: float = 0.1,
    tau: float = 1e4,
    per_visit: bool = False,
    start=None,
    backend: str = "numba",
) -> np.ndarray:
    """On-policy SF TD over one stream; see :func:`predrep.sr.learn_sr_td`."""
    pi = check_policy(policy, mdp)
    phi = np.ascontiguousarray(features, dtype=float)
    rng = as_generator(rng)
    p0 = _start_distribution(mdp, start)
    cdf_pi = _kernels.cumulative(pi)
    cdf_t = _kernels.cumulative(mdp.transition)
    cdf_0 = _kernels.cumulative(p0)
    s0 = int(np.searchsorted(cdf_0, rng.random(), side="right"))
    a0 = int(np.searchsorted(cdf_pi[s0], rng.random(), side="right"))
    u = rng.random((n_steps, 4))
    psi = np.zeros((mdp.n_states, mdp.n_actions, phi.shape[1]))
    term = np.asarray(mdp.terminal_mask)
    if backend == "numba":
        _kernels.sf_td_stream(
            psi, phi, cdf_pi, cdf_t, cdf_0, term, u, eta0, tau, mdp.gamma, s0, a0, per_visit
        )
        return psi
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")

    def draw(cdf, x):
        return min(int(np.searchsorted(cdf, x, side="right")), cdf.size - 1)

    visits = np.zeros(psi.shape[:2])
    s, a = s0, a0
    for t in range(n_steps):
        s2 = draw(cdf_t[s, a], u[t, 0])
        a2 = draw(cdf_pi[s2], u[t, 1])
        eta = eta0 / (1.0 + (visits[s, a] if per_visit else t) / tau)
        visits[s, a] += 1.0
        psi = sf_td_step(psi, s, a, s2, a2, phi, eta, mdp.gamma, term[s2])
        if term[s2]:
            s = draw(cdf_0, u[t, 2])
            a = draw(cdf_pi[s], u[t, 3])
        else:
            s, a = s2, a2
    return psi


def q_from_sf(sf, w) -> np.ndarray:
    """``Q(s, a) = Psi(s, a) . w``."""
    psi = np.asarray(sf, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or psi.shape[-1] != w.shape[0]:
        raise MDPError(f"task vector of shape {w.shape} does not match {psi.shape[-1]} features")
    return psi @ w


def check_span(w_new, train_ws, tol: float = 1e-8) -> bool:
    """Warn (and return False) when ``w_new`` is outside the span of ``train_ws``."""
    W = np.atleast_2d(np.asarray(train_ws, dtype=float))
    coef, *_ = np.linalg.lstsq(W.T, np.asarray(w_new, dtype=float), rcond=None)
    inside = bool(np.linalg.norm(W.T @ coef - w_new) <= tol * max(1.0, np.linalg.norm(w_new)))
    if not inside:
        warnings.warn("w_new lies outside the span of the training tasks", stacklevel=2)
    return inside


def _library_q(sfs, w, s) -> np.ndarray:
    if len(sfs) == 0:
        raise MDPError("GPI needs a non-empty SF library")
    return np.stack([q_from_sf(np.asarray(sf)[s], w) for sf in sfs])  # (policy, action)


def gpi_action(sfs, w_new, s: int) -> tuple[int, int, float]:
    """``argmax_a max_i psi_i(s, a) . w``; ties go to the lower policy, then lower action.

    Returns ``(action, winning policy index, Q value)``.
    """
    q = _library_q(sfs, w_new, s)
    flat = int(np.argmax(q))  # row-major argmax returns the first maximum
    i, a = divmod(flat, q.shape[1])
    return a, i, float(q[i, a])


def gpi_policy(sfs, w_new) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic GPI policy over all states plus the winning policy per state."""
    n = np.asarray(sfs[0]).shape[0]
    picks = [gpi_action(sfs, w_new, s) for s in range(n)]
    actions = np.array([p[0] for p in picks])
    pi = np.zeros((n, np.asarray(sfs[0]).shape[1]))
    pi[np.arange(n), actions] = 1.0
    return pi, np.array([p[1] for p in picks])


def option_keyboard_action(sfs, g, s: int, w_new) -> tuple[int, int, float]:
    """GPI with the state-dependent preference ``w_s = g(s, w_new)``."""
    return gpi_action(sfs, g(s, w_new), s)


def option_keyboard_policy(sfs, g, w_new) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(sfs[0]).shape[0]
    picks = [option_keyboard_action(sfs, g, s, w_new) for s in range(n)]
    pi = np.zeros((n, np.asarray(sfs[0]).shape[1]))
    pi[np.arange(n), [p[0] for p in picks]] = 1.0
    return pi, np.array([p[1] for p in picks])


def constant_preference(s, w):
    return np.asarray(w, dtype=float)


def region_preference(region_mask, flip):
    """Preference that multiplies ``w`` elementwise by ``flip`` inside a region."""
    region_mask = np.asarray(region_mask, dtype=bool)
    flip = np.asarray(flip, dtype=float)

    def g(s, w):
        w = np.asarray(w, dtype=float)
        return w * flip if region_mask[s] else w

    return g


def mean_sf(sf) -> np.ndarray:
    """Action-averaged SF ``psi_bar(s)`` (the uniform-policy state SF)."""
    return np.asarray(sf, dtype=float).mean(axis=1)


def sf_similarity(sf_uniform, s1: int, s2: int, a: int | None = None) -> float:
    """``psi_bar(s1) . psi_bar(s2)``, or ``psi(s1, a) . psi_bar(s2)`` when ``a`` is given."""
    psi = np.asarray(sf_uniform, dtype=float)
    left = psi[s1].mean(axis=0) if a is None else psi[s1, a]
    return float(left @ psi[s2].mean(axis=0))


def sf_similarity_matrix(sf_uniform) -> np.ndarray:
    bar = mean_sf(sf_uniform)
    return bar @ bar.T
