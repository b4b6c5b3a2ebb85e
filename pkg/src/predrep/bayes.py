"""Bayesian associative learning: Kalman filter, Kalman TD, CRP priors and
a sticky-CRP switching learner for context-dependent successor features.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

PSD_TOL = 1e-10


class BeliefError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray
    q: float = 0.0  # process noise added to the covariance before each update
    obs_var: float = 1.0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise BeliefError(f"cov shape {cov.shape} does not match mean of size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def isotropic(cls, dim: int, var: float = 1.0, q: float = 0.0, obs_var: float = 1.0):
        return cls(np.zeros(dim), var * np.eye(dim), q, obs_var)

    def inflate(self, n_skip: int = 1) -> "GaussianBelief":
        """Elapsed time: ``n_skip`` applications of ``cov <- cov + q I`` with no data."""
        cov = self.cov + n_skip * self.q * np.eye(self.mean.size)
        return GaussianBelief(self.mean, cov, self.q, self.obs_var)


@dataclass(frozen=True)
class KalmanDiagnostics:
    delta: float
    lam: float  # predictive variance of the observation
    gain: np.ndarray


def check_psd(cov, tol: float = PSD_TOL) -> None:
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, atol=1e-9):
        raise BeliefError("covariance is not symmetric")
    low = np.linalg.eigvalsh(cov).min()
    if low < -tol:
        raise BeliefError(f"covariance is not positive semidefinite (min eigenvalue {low:.3g})")


def kalman_step(belief: GaussianBelief, phi, r: float, check: bool = True):
    """One Kalman filter update of linear-Gaussian reward weights.

    ``Sigma_p = Sigma + q I``, ``lam = phi' Sigma_p phi + obs_var``,
    ``k = Sigma_p phi / lam``, ``delta = r - phi' w``; then ``w += k delta``
    and ``Sigma = Sigma_p - lam k k'`` (symmetrized).
    """
    if check:
        check_psd(belief.cov)
    phi = np.asarray(phi, dtype=float)
    cov_p = belief.cov + belief.q * np.eye(belief.mean.size)
    s = cov_p @ phi
    lam = float(phi @ s) + belief.obs_var
    k = s / lam
    delta = float(r - phi @ belief.mean)
    mean = belief.mean + k * delta
    cov = cov_p - lam * np.outer(k, k)
    cov = 0.5 * (cov + cov.T)
    return GaussianBelief(mean, cov, belief.q, belief.obs_var), KalmanDiagnostics(delta, lam, k)


def kalman_td_step(belief: GaussianBelief, phi_t, phi_next, gamma: float, r: float, check=True):
    """Kalman TD: :func:`kalman_step` on ``h = phi_t - gamma phi_next``."""
    h = np.asarray(phi_t, dtype=float) - gamma * np.asarray(phi_next, dtype=float)
    return kalman_step(belief, h, r, check)


def crp_prior(counts, alpha: float) -> np.ndarray:
    """``[N_1, ..., N_K, alpha] / (sum N + alpha)``; the last slot is a new context."""
    return sticky_crp_prior(counts, alpha, 0.0, None)


def sticky_crp_prior(counts, alpha: float, nu: float, prev: int | None) -> np.ndarray:
    """CRP with ``nu`` extra pseudo-counts on the previous context."""
    if alpha < 0 or nu < 0:
        raise BeliefError("alpha and nu must be non-negative")
    w = np.append(np.asarray(counts, dtype=float), alpha)
    if np.any(w < 0):
        raise BeliefError("counts must be non-negative")
    if prev is not None and nu > 0:
        w[prev] += nu
    total = w.sum()
    if total <= 0:
        raise BeliefError("all prior weights are zero")
    return w / total


@dataclass
class ContextBank:
    """SF weights of one context: column ``j`` predicts feature ``j``; one shared covariance."""

    weights: np.ndarray  # (d, d)
    cov: np.ndarray  # (d, d)


@dataclass
class ContextModel:
    n_features: int
    alpha: float = 1.0
    nu: float = 100.0
    sigma_phi: float = 0.05
    q: float = 0.001
    mu0: float = 0.0
    sigma0: float = 1.0
    banks: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    prev: int | None = None

    def new_bank(self) -> ContextBank:
        d = self.n_features
        return ContextBank(np.full((d, d), float(self.mu0)), self.sigma0 * np.eye(d))

    def elapse(self, n_skip: int) -> "ContextModel":
        """Inflate every context's covariance ``n_skip`` times (time passing)."""
        new = copy.deepcopy(self)
        for bank in new.banks:
            bank.cov = bank.cov + n_skip * self.q * np.eye(self.n_features)
        return new


@dataclass(frozen=True)
class ContextStep:
    posterior: np.ndarray  # over existing contexts plus a new one
    assigned: int
    created: bool
    delta: np.ndarray  # per-feature SF prediction error in the assigned context


def _log_lik(bank: ContextBank, h, target, q, sigma_phi) -> float:
    cov_p = bank.cov + q * np.eye(h.size)
    var = float(h @ cov_p @ h) + sigma_phi**2
    resid = target - h @ bank.weights
    return float(-0.5 * np.sum(resid**2) / var - 0.5 * resid.size * np.log(2 * np.pi * var))


def context_step(model: ContextModel, phi_t, phi_next, gamma: float):
    """Assign one transition to a context and update that context's SFs.

    The regression is ``phi_j(s_t) ~ N(h' m_j, h' (Sigma + qI) h + sigma_phi^2)``
    with ``h = phi(s_t) - gamma phi(s_{t+1})``.  The posterior over contexts
    is the sticky-CRP prior times this likelihood; the MAP context (possibly
    a fresh one drawn from the hyperprior) receives a Kalman TD update of
    all its SF columns.  Returns ``(ContextStep, new model)``.
    """
    phi_t = np.asarray(phi_t, dtype=float)
    h = phi_t - gamma * np.asarray(phi_next, dtype=float)
    prior = sticky_crp_prior(model.counts, model.alpha, model.nu, model.prev)
    candidates = list(model.banks) + [model.new_bank()]
    log_post = np.log(np.clip(prior, 1e-300, None)) + np.array(
        [_log_lik(b, h, phi_t, model.q, model.sigma_phi) for b in candidates]
    )
    log_post -= log_post.max()
    post = np.exp(log_post)
    post /= post.sum()
    k = int(np.argmax(post))

    new = copy.deepcopy(model)
    created = k == len(model.banks)
    if created:
        new.banks.append(model.new_bank())
        new.counts.append(0)
    bank = new.banks[k]
    cov_p = bank.cov + model.q * np.eye(h.size)
    s = cov_p @ h
    lam = float(h @ s) + model.sigma_phi**2
    gain = s / lam
    delta = phi_t - h @ bank.weights
    bank.weights = bank.weights + np.outer(gain, delta)
    cov = cov_p - lam * np.outer(gain, gain)
    bank.cov = 0.5 * (cov + cov.T)
    new.counts[k] += 1
    new.prev = k
    return ContextStep(post, k, created, delta), new


def run_context_stream(model: ContextModel, features_seq, gamma: float):
    """Feed consecutive feature vectors; returns the assignments and the final model."""
    out = []
    for phi_t, phi_next in zip(features_seq[:-1], features_seq[1:]):
        step, model = context_step(model, phi_t, phi_next, gamma)
        out.append(step)
    return out, model


def run_trials(belief: GaussianBelief, trials, check: bool = True):
    """Apply :func:`kalman_step` over ``(phi, r)`` trials.

    Returns the final belief and a ``(n + 1, d)`` array of posterior means
    (row 0 is the prior) together with the per-trial diagnostics.
    """
    means, diags = [belief.mean], []
    for phi, r in trials:
        belief, diag = kalman_step(belief, phi, r, check)
        means.append(belief.mean)
        diags.append(diag)
    return belief, np.array(means), diags


def trials_from_json(text: str) -> list[tuple[np.ndarray, float]]:
    """Parse ``[{"phi": [...], "r": x, "repeat": n}, ...]`` into a trial list."""
    out = []
    for item in json.loads(text):
        out += [(np.asarray(item["phi"], dtype=float), float(item["r"]))] * int(item.get("repeat", 1))
    return out


def backward_blocking_trials(rng, n_range=(5, 20), reward: float = 1.0, noise: float = 0.1):
    """Compound ``[1, 1]`` reinforced, then ``[1, 0]`` alone; returns ``(phase1, phase2)``."""
    n1, n2 = (int(rng.integers(n_range[0], n_range[1] + 1)) for _ in range(2))
    phase1 = [(np.array([1.0, 1.0]), reward + noise * rng.normal()) for _ in range(n1)]
    phase2 = [(np.array([1.0, 0.0]), reward + noise * rng.normal()) for _ in range(n2)]
    return phase1, phase2


def latent_inhibition_trials(rng, n_range=(5, 30), reward: float = 1.0, noise: float = 0.1):
    """Unreinforced ``[1, 0]`` pre-exposure then reinforced ``[1, 0]``; ``(pre, conditioning)``."""
    n_pre, n_cond = int(rng.integers(n_range[0], n_range[1] + 1)), 10
    pre = [(np.array([1.0, 0.0]), noise * rng.normal()) for _ in range(n_pre)]
    cond = [(np.array([1.0, 0.0]), reward + noise * rng.normal()) for _ in range(n_cond)]
    return pre, cond


def cycle_features(order, n_features: int, reps: int = 1) -> list[np.ndarray]:
    """One-hot features of a deterministic loop visiting ``order`` ``reps`` times."""
    eye = np.eye(n_features)
    return [eye[s] for s in list(order) * reps]


def new_context_fraction(model: ContextModel, features_seq, gamma: float) -> float:
    """Share of transitions in ``features_seq`` assigned to a context unseen by ``model``."""
    steps, _ = run_context_stream(model, features_seq, gamma)
    known = len(model.banks)
    return float(np.mean([s.assigned >= known for s in steps]))


def switch_permutation(n: int, rng) -> list[int]:
    """Random visiting order of ``n`` states sharing no edge with the loop ``0 -> 1 -> ...``."""
    while True:
        order = [int(x) for x in rng.permutation(n)]
        if all(order[(i + 1) % n] != (order[i] + 1) % n for i in range(n)):
            return order
