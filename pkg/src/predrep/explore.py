"""Exploration built on predictive representations.

Eigenoptions from the SR spectrum, an inverse-norm count bonus, posterior
sampling of Q through successor features, and a successor-feature
similarity (SFS) landmark graph for frontier-directed exploration.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from predrep.bayes import GaussianBelief, kalman_step
from predrep.mdp import MDPError, TabularMDP, uniform_policy
from predrep.rng import as_generator
from predrep.sf import mean_sf, sf_closed_form, sf_similarity
from predrep.tcm import sr_td_error

# ---------------------------------------------------------------- spectrum


def _sign_fix(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, j]) > tol)
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] *= -1.0
    return vecs


def eigen_decompose_sr(sr, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Top-``k`` eigenpairs of the symmetrized SR ``(M + M^T) / 2``.

    Returns ``(values, vectors)`` with eigenvalues descending and vectors in
    the columns, each oriented so its first nonzero entry is positive.
    """
    M = np.asarray(sr, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise MDPError(f"SR must be square, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise MDPError("SR contains non-finite entries")
    k = M.shape[0] if k is None else k
    if not 1 <= k <= M.shape[0]:
        raise MDPError(f"k must lie in [1, {M.shape[0]}]")
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(-vals, kind="stable")[:k]
    return vals[order], _sign_fix(vecs[:, order])


def eigenoption_reward(e, features, s: int, s_next: int) -> float:
    """Intrinsic reward ``e . (phi(s') - phi(s))``."""
    phi = np.asarray(features, dtype=float)
    return float(np.asarray(e, dtype=float) @ (phi[s_next] - phi[s]))


# ---------------------------------------------------------------- options


@dataclass(frozen=True, eq=False)
class OptionDef:
    initiation: np.ndarray  # bool per state
    policy: np.ndarray  # pi[s, a]
    termination: np.ndarray  # bool per state
    eigen_index: int
    eigenvector: np.ndarray

    def can_start(self, s: int) -> bool:
        return bool(self.initiation[s])

    def to_dict(self) -> dict:
        return {
            "initiation": np.flatnonzero(self.initiation).tolist(),
            "termination": np.flatnonzero(self.termination).tolist(),
            "policy": self.policy.tolist(),
            "eigen_index": self.eigen_index,
            "eigenvector": self.eigenvector.tolist(),
        }


def eigenoption(
    mdp: TabularMDP,
    e,
    eigen_index: int = 0,
    gamma: float | None = None,
    tol: float = 1e-10,
    features=None,
) -> OptionDef:
    """Option maximizing the eigenpurpose ``e . (phi(s') - phi(s))``.

    Solved by value iteration with an always-available stop action worth 0,
    so ``V >= 0``; the option terminates where ``V <= tol`` (no further
    intrinsic gain is reachable) and may start everywhere else.
    """
    gamma = mdp.gamma if gamma is None else gamma
    phi = np.eye(mdp.n_states) if features is None else np.asarray(features, dtype=float)
    e = np.asarray(e, dtype=float)
    ev = phi @ e
    r_sa = mdp.transition @ ev - ev[:, None]
    v = np.zeros(mdp.n_states)
    for _ in range(100_000):
        q = r_sa + gamma * (mdp.transition @ v)
        v_new = np.maximum(q.max(axis=1), 0.0)
        done = np.max(np.abs(v_new - v)) < tol * 1e-2
        v = v_new
        if done:
            break
    q = r_sa + gamma * (mdp.transition @ v)
    act = np.argmax(q, axis=1)
    pi = np.zeros((mdp.n_states, mdp.n_actions))
    pi[np.arange(mdp.n_states), act] = 1.0
    term = v <= tol
    return OptionDef(~term, pi, term, eigen_index, e.copy())


def run_option(mdp: TabularMDP, option: OptionDef, s: int, rng, max_len: int = 100):
    """Execute an option from ``s``; returns the visited successor states."""
    visited = []
    for _ in range(max_len):
        if option.termination[s] or mdp.terminal_mask[s]:
            break
        a = int(np.argmax(option.policy[s]))
        s = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
        visited.append(s)
    return visited


def random_walk_with_options(
    mdp: TabularMDP, options, n_steps: int, rng=None, start: int = 0, max_option_len: int = 100
) -> np.ndarray:
    """Uniform random choice over primitives plus options available in ``s``.

    Returns the visited state sequence (length ``n_steps + 1``); an option
    call that terminates immediately consumes one decision without moving.
    """
    rng = as_generator(rng)
    states = [start]
    s = start
    while len(states) <= n_steps:
        usable = [o for o in options if o.can_start(s)]
        choice = int(rng.integers(mdp.n_actions + len(usable)))
        if choice < mdp.n_actions:
            s = int(rng.choice(mdp.n_states, p=mdp.transition[s, choice]))
            states.append(s)
        else:
            path = run_option(mdp, usable[choice - mdp.n_actions], s, rng, max_option_len)
            path = path[: n_steps + 1 - len(states)]
            states.extend(path)
            if path:
                s = path[-1]
            else:
                states.append(s)
    return np.array(states[: n_steps + 1])


def visit_entropy(states, n_states: int) -> float:
    counts = np.bincount(np.asarray(states), minlength=n_states).astype(float)
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _sr_from_states(states, n_states: int, gamma: float, eta: float = 0.05) -> np.ndarray:
    """TD-learn an SR from a visited-state sequence (one row update per step)."""
    m = np.zeros((n_states, n_states))
    for s, s2 in zip(states[:-1], states[1:]):
        m[s] += eta * sr_td_error(m, int(s), int(s2), gamma)
    return m


def discover_eigenoptions(
    mdp: TabularMDP,
    n_rounds: int,
    samples_per_round: int,
    rng=None,
    start: int = 0,
    sr_gamma: float = 0.9,
    eta: float = 0.05,
) -> list[OptionDef]:
    """Iterative eigenoption discovery.

    Each round walks randomly over primitives and the options found so far,
    TD-learns an SR from all samples collected, and turns the next
    eigenvector of its symmetrization into an option.  Round ``i`` uses
    eigenvector ``i + 1`` (the leading one is near constant).  The vector is
    oriented to point away from where the walk spends its time, so the
    option climbs toward rarely visited states.
    """
    if n_rounds < 0:
        raise MDPError("n_rounds must be >= 0")
    rng = as_generator(rng)
    options: list[OptionDef] = []
    history = [start]
    s = start
    for r in range(n_rounds):
        walk = random_walk_with_options(mdp, options, samples_per_round, rng, s)
        history.extend(walk[1:].tolist())
        s = int(walk[-1])
        m = _sr_from_states(history, mdp.n_states, sr_gamma, eta)
        _, vecs = eigen_decompose_sr(m, min(r + 2, mdp.n_states))
        e = vecs[:, r + 1]
        visits = np.bincount(history, minlength=mdp.n_states)
        if e @ (visits - visits.mean()) > 0:
            e = -e
        options.append(eigenoption(mdp, e, r + 1))
    return options


# ---------------------------------------------------------------- bonuses


def count_bonus(sf, s: int, a: int | None = None, max_bonus: float = 1e3) -> float:
    """``1 / ||psi(s)||_1``, with ``max_bonus`` for an all-zero row.

    For an action-conditioned SF the row ``psi(s, a)`` is used when ``a`` is
    given and the action average otherwise.
    """
    psi = np.asarray(sf, dtype=float)
    row = psi[s] if psi.ndim == 2 else (psi[s, a] if a is not None else psi[s].mean(axis=0))
    norm = np.abs(row).sum()
    if norm == 0.0:
        return float(max_bonus)
    return float(min(1.0 / norm, max_bonus))


@dataclass(frozen=True, eq=False)
class RewardBelief:
    mean: np.ndarray
    cov: np.ndarray
    noise: float = 1.0

    @classmethod
    def prior(cls, n_features: int, noise: float = 1.0) -> "RewardBelief":
        return cls(np.zeros(n_features), np.eye(n_features), noise)

    def update(self, phi, r: float) -> "RewardBelief":
        """Conjugate Gaussian update on one observation ``r ~ N(phi . w, noise)``."""
        g, _ = kalman_step(GaussianBelief(self.mean, self.cov, 0.0, self.noise), phi, r)
        return RewardBelief(g.mean, g.cov, self.noise)


def _psd_factor(cov: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise MDPError("covariance is not symmetric")
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -tol:
        raise MDPError(f"covariance is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def posterior_q_sample(sf, belief: RewardBelief, rng=None) -> np.ndarray:
    """Sample ``w ~ N(mu_w, Sigma_w)`` and return ``Q = Psi w``.

    ``Psi w`` is then distributed as ``N(Psi mu_w, Psi Sigma_w Psi^T)``.
    """
    psi = np.asarray(sf, dtype=float)
    if psi.shape[-1] != belief.mean.shape[0]:
        raise MDPError("belief dimension does not match the SF features")
    factor = _psd_factor(belief.cov)
    rng = as_generator(rng)
    w = belief.mean + factor @ rng.standard_normal(factor.shape[1])
    return psi @ w


# ---------------------------------------------------------------- landmarks


@dataclass
class LandmarkGraph:
    landmarks: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    eps_add: float | None = None  # None: 0.75 x mean landmark self-similarity
    graph: nx.Graph = field(default_factory=nx.Graph)

    def threshold(self, sf_uniform) -> float:
        if self.eps_add is not None:
            return self.eps_add
        bar = mean_sf(sf_uniform)[self.landmarks]
        return 0.75 * float(np.mean(np.sum(bar * bar, axis=1)))

    def shortest_path(self, a, b):
        try:
            return nx.shortest_path(self.graph, a, b)
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            return None

    def to_dict(self) -> dict:
        return {
            "landmarks": list(self.landmarks),
            "counts": {str(k): v for k, v in self.counts.items()},
            "eps_add": self.eps_add,
            "edges": [list(e) for e in self.graph.edges],
        }


def landmark_localize(graph: LandmarkGraph, sf_uniform, s: int):
    """Landmark with the highest SFS to ``s``; ``None`` for an empty graph."""
    if not graph.landmarks:
        return None
    sims = [sf_similarity(sf_uniform, s, L) for L in graph.landmarks]
    return graph.landmarks[int(np.argmax(sims))]


def landmark_maybe_add(graph: LandmarkGraph, sf_uniform, s: int) -> LandmarkGraph:
    """Insert ``s`` iff its SFS to every landmark is below the add threshold."""
    if s in graph.counts:
        return graph
    if graph.landmarks:
        eps = graph.threshold(sf_uniform)
        if any(sf_similarity(sf_uniform, s, L) >= eps for L in graph.landmarks):
            return graph
    new = copy.deepcopy(graph)
    new.landmarks.append(s)
    new.counts[s] = 1
    new.graph.add_node(s)
    return new


def landmark_goal_action(sf_uniform, s: int, subgoal: int) -> int:
    """SFS-greedy action ``argmax_a psi(s, a) . psi_bar(subgoal)``."""
    psi = np.asarray(sf_uniform, dtype=float)
    target = psi[subgoal].mean(axis=0)
    return int(np.argmax(psi[s] @ target))


def landmark_explore(
    mdp: TabularMDP,
    sf_uniform,
    n_steps: int,
    rng=None,
    start: int = 0,
    nav_steps: int = 20,
    walk_steps: int = 5,
    eps_add: float | None = None,
) -> tuple[np.ndarray, LandmarkGraph]:
    """Frontier-biased exploration on an SFS landmark graph.

    Repeats: pick a frontier landmark with probability proportional to
    ``1 / N(L)``, plan a shortest path of landmark subgoals to it through
    the graph, and follow SFS-greedy actions toward each subgoal until the
    agent localizes to it (at most ``nav_steps`` per subgoal).  At the
    frontier the agent random-walks ``walk_steps``.  Landmarks are added
    along the way and consecutive localizations are linked in the graph.
    """
    rng = as_generator(rng)
    graph = LandmarkGraph(eps_add=eps_add)
    states = [start]
    s = start
    last = None

    def observe(s, last, graph):
        graph = landmark_maybe_add(graph, sf_uniform, s)
        here = landmark_localize(graph, sf_uniform, s)
        if here != last:
            graph.counts[here] += 1
            if last is not None:
                graph.graph.add_edge(last, here)
        return here, graph

    def move(s, a):
        return int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))

    last, graph = observe(s, last, graph)
    while len(states) <= n_steps:
        inv = np.array([1.0 / graph.counts[L] for L in graph.landmarks])
        frontier = graph.landmarks[int(rng.choice(len(inv), p=inv / inv.sum()))]
        plan = graph.shortest_path(last, frontier) or [frontier]
        for subgoal in plan:
            for _ in range(nav_steps):
                if last == subgoal or len(states) > n_steps:
                    break
                s = move(s, landmark_goal_action(sf_uniform, s, subgoal))
                states.append(s)
                last, graph = observe(s, last, graph)
            if last != subgoal:
                break
        for _ in range(walk_steps):
            if len(states) > n_steps:
                break
            s = move(s, int(rng.integers(mdp.n_actions)))
            states.append(s)
            last, graph = observe(s, last, graph)
    return np.array(states[: n_steps + 1]), graph


def uniform_sf(mdp: TabularMDP, features=None):
    """Closed-form SF of the uniform random policy (one-hot features by default)."""
    phi = np.eye(mdp.n_states) if features is None else features
    return sf_closed_form(mdp, uniform_policy(mdp), phi, policy_id="uniform")

