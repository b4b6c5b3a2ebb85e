"""Tabular MDPs, policies, trajectories and the classical solvers.

Reward convention: ``reward[s]`` is earned on *arrival* in ``s``, so
``V(s) = E[sum_t gamma**t R(s_{t+1})]``.

Terminal states self-loop in ``transition`` so every row stays stochastic,
but episodes end on arrival: the terminal's arrival reward is counted once
and nothing accrues afterwards.  All predictive quantities (values, SRs,
SFs) are computed on the *episodic kernel*, i.e. the policy transition
matrix with terminal rows zeroed.  For MDPs without terminals that kernel is
exactly ``T^pi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from predrep.rng import as_generator

ROW_TOL = 1e-12


class MDPError(ValueError):
    """Raised for malformed MDPs, policies or mismatched shapes."""


@dataclass(frozen=True, eq=False)
class TabularMDP:
    gamma: float
    transition: np.ndarray  # T[s, a, s']
    reward: np.ndarray  # R[s'] (arrival)
    terminal_mask: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        T = np.array(self.transition, dtype=float)
        R = np.array(self.reward, dtype=float)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise MDPError(f"transition must have shape (S, A, S), got {T.shape}")
        n = T.shape[0]
        if R.shape != (n,):
            raise MDPError(f"reward must have shape ({n},), got {R.shape}")
        if not 0.0 <= self.gamma < 1.0:
            raise MDPError(f"gamma must lie in [0, 1), got {self.gamma}")
        if np.any(T < 0) or np.any(np.abs(T.sum(axis=2) - 1.0) > ROW_TOL):
            raise MDPError("every T[s, a, :] must be a probability vector")
        term = (
            np.zeros(n, dtype=bool)
            if self.terminal_mask is None
            else np.array(self.terminal_mask, dtype=bool)
        )
        if term.shape != (n,):
            raise MDPError("terminal_mask has the wrong length")
        for s in np.flatnonzero(term):
            if not np.all(T[s, :, s] == 1.0):
                raise MDPError(f"terminal state {s} must self-loop under every action")
        T.setflags(write=False)
        R.setflags(write=False)
        term.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "terminal_mask", term)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_reward(self, reward) -> "TabularMDP":
        return TabularMDP(self.gamma, self.transition, reward, self.terminal_mask)

    def with_gamma(self, gamma: float) -> "TabularMDP":
        return TabularMDP(gamma, self.transition, self.reward, self.terminal_mask)

    def to_json(self) -> str:
        return json.dumps(
            {
                "gamma": self.gamma,
                "transition": self.transition.tolist(),
                "reward": self.reward.tolist(),
                "terminals": np.flatnonzero(self.terminal_mask).tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TabularMDP":
        d = json.loads(text)
        T = np.asarray(d["transition"], dtype=float)
        mask = np.zeros(T.shape[0], dtype=bool)
        mask[list(d.get("terminals", []))] = True
        return cls(d["gamma"], T, d["reward"], mask)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "TabularMDP":
        return cls.from_json(Path(path).read_text())


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)  # (s, a, r, s')
    seed: object = None

    def __len__(self):
        return len(self.steps)

    @property
    def states(self) -> list[int]:
        if not self.steps:
            return []
        return [self.steps[0][0]] + [step[3] for step in self.steps]


def check_policy(policy, mdp: TabularMDP | None = None) -> np.ndarray:
    """Validate a policy matrix ``pi[s, a]`` and return it as a float array."""
    pi = np.asarray(policy, dtype=float)
    if pi.ndim != 2:
        raise MDPError(f"policy must be 2-D, got shape {pi.shape}")
    if mdp is not None and pi.shape != (mdp.n_states, mdp.n_actions):
        raise MDPError(
            f"policy shape {pi.shape} does not match MDP "
            f"({mdp.n_states}, {mdp.n_actions})"
        )
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > ROW_TOL):
        raise MDPError("policy rows must be probability vectors")
    return pi


def uniform_policy(mdp: TabularMDP) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def deterministic_policy(actions, n_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((actions.size, n_actions))
    pi[np.arange(actions.size), actions] = 1.0
    return pi


def greedy_policy(q: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Deterministic greedy policy; ties go to the lowest action index."""
    q = np.asarray(q, dtype=float)
    best = q.max(axis=1, keepdims=True)
    first = np.argmax(q >= best - tol, axis=1)
    return deterministic_policy(first, q.shape[1])


def epsilon_greedy_policy(q: np.ndarray, epsilon: float) -> np.ndarray:
    pi = greedy_policy(q) * (1.0 - epsilon)
    return pi + epsilon / q.shape[1]


def policy_transition_matrix(mdp: TabularMDP, policy) -> np.ndarray:
    """Marginal transition matrix ``T^pi[s, s'] = sum_a pi(a|s) T(s'|s, a)``."""
    pi = check_policy(policy, mdp)
    return np.einsum("sa,sat->st", pi, mdp.transition)


def episodic_kernel(mdp: TabularMDP, policy) -> np.ndarray:
    """``T^pi`` with terminal rows zeroed (nothing happens after arrival)."""
    P = policy_transition_matrix(mdp, policy)
    P[mdp.terminal_mask] = 0.0
    return P


def _continuation(mdp: TabularMDP) -> np.ndarray:
    """Per-state multiplier on bootstrapped values: 0 at terminals."""
    return np.where(mdp.terminal_mask, 0.0, 1.0)


def policy_evaluation_exact(mdp: TabularMDP, policy) -> np.ndarray:
    """Solve ``(I - gamma P) V = P R`` with ``P`` the episodic kernel."""
    P = episodic_kernel(mdp, policy)
    A = np.eye(mdp.n_states) - mdp.gamma * P
    try:
        return np.linalg.solve(A, P @ mdp.reward)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - impossible for gamma < 1
        raise RuntimeError("singular policy-evaluation system") from exc


def q_from_values(mdp: TabularMDP, values: np.ndarray) -> np.ndarray:
    """One-step lookahead ``Q(s,a) = sum_s' T(s'|s,a) [R(s') + gamma V(s')]``.

    Terminal rows are zero.
    """
    target = mdp.reward + mdp.gamma * np.asarray(values, dtype=float)
    q = mdp.transition @ target
    q[mdp.terminal_mask] = 0.0
    return q


def q_evaluation_exact(mdp: TabularMDP, policy) -> np.ndarray:
    return q_from_values(mdp, policy_evaluation_exact(mdp, policy))


def bellman_residual(mdp: TabularMDP, policy, values) -> np.ndarray:
    P = episodic_kernel(mdp, policy)
    v = np.asarray(values, dtype=float)
    return v - P @ (mdp.reward + mdp.gamma * v)


def default_horizon(gamma: float, tol: float = 1e-6) -> int:
    if gamma <= 0.0:
        return 1
    return int(math.ceil(math.log(tol) / math.log(gamma)))


def _step(mdp: TabularMDP, pi: np.ndarray, s: int, rng) -> tuple[int, int]:
    a = int(rng.choice(mdp.n_actions, p=pi[s]))
    s2 = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
    return a, s2


def sample_trajectory(mdp: TabularMDP, policy, start: int, horizon: int, rng=None) -> Trajectory:
    """Roll out ``policy`` from ``start`` for at most ``horizon`` steps.

    The rollout stops right after the first arrival in a terminal state.
    Starting *in* a terminal state yields an empty trajectory.
    """
    pi = check_policy(policy, mdp)
    if not 0 <= start < mdp.n_states:
        raise MDPError(f"invalid start state {start}")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = as_generator(rng)
    traj = Trajectory(seed=seed)
    s = int(start)
    if mdp.terminal_mask[s]:
        return traj
    for _ in range(horizon):
        a, s2 = _step(mdp, pi, s, rng)
        traj.steps.append((s, a, float(mdp.reward[s2]), s2))
        if mdp.terminal_mask[s2]:
            break
        s = s2
    return traj


def discounted_return(rewards, gamma: float) -> float:
    rewards = np.asarray(rewards, dtype=float)
    return float(np.sum(rewards * gamma ** np.arange(rewards.size)))


def monte_carlo_evaluation(
    mdp: TabularMDP,
    policy,
    state: int,
    n_rollouts: int,
    horizon: int | None = None,
    rng=None,
) -> tuple[float, float]:
    """Mean discounted return over ``n_rollouts`` rollouts and its standard error."""
    if n_rollouts < 1:
        raise MDPError("n_rollouts must be >= 1")
    horizon = default_horizon(mdp.gamma) if horizon is None else horizon
    pi = check_policy(policy, mdp)
    rng = as_generator(rng)
    returns = np.empty(n_rollouts)
    for i in range(n_rollouts):
        traj = sample_trajectory(mdp, pi, state, horizon, rng)
        returns[i] = discounted_return([r for _, _, r, _ in traj.steps], mdp.gamma)
    se = float(returns.std(ddof=1) / math.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return float(returns.mean()), se


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_iter: int = 100_000):
    """Optimal values and the greedy (lowest-index tie-break) policy."""
    if tol <= 0:
        raise MDPError("tol must be positive")
    cont = _continuation(mdp)
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        q = mdp.transition @ (mdp.reward + mdp.gamma * v)
        q *= cont[:, None]
        v_new = q.max(axis=1)
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta < tol:
            break
    q = q_from_values(mdp, v)
    return v, greedy_policy(q, tol=1e-12)


def solve_q_optimal(mdp: TabularMDP, tol: float = 1e-12) -> np.ndarray:
    v, _ = value_iteration(mdp, tol)
    return q_from_values(mdp, v)


def q_learning(
    mdp: TabularMDP,
    episodes: int,
    learning_rate=0.1,
    epsilon: float = 0.1,
    rng=None,
    start=None,
    max_steps: int | None = None,
    q_init: np.ndarray | None = None,
) -> np.ndarray:
    """Tabular Q-learning with epsilon-greedy exploration.

    ``learning_rate`` is either a constant or a callable ``eta(visits)`` of
    the per-(s, a) visit count.  ``start`` is a state, a distribution over
    states, or ``None`` for uniform over non-terminal states.  Updates into
    a terminal state do not bootstrap.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise MDPError("epsilon must lie in [0, 1]")
    rng = as_generator(rng)
    eta = learning_rate if callable(learning_rate) else (lambda n, c=learning_rate: c)
    S, A = mdp.n_states, mdp.n_actions
    q = np.zeros((S, A)) if q_init is None else np.array(q_init, dtype=float)
    visits = np.zeros((S, A), dtype=np.int64)
    cont = _continuation(mdp)
    if start is None:
        p0 = cont / cont.sum()
    elif np.ndim(start) == 0:
        p0 = np.zeros(S)
        p0[int(start)] = 1.0
    else:
        p0 = np.asarray(start, dtype=float)
    max_steps = default_horizon(mdp.gamma, 1e-3) if max_steps is None else max_steps
    for _ in range(episodes):
        s = int(rng.choice(S, p=p0))
        for _ in range(max_steps):
            if mdp.terminal_mask[s]:
                break
            if rng.random() < epsilon:
                a = int(rng.integers(A))
            else:
                a = int(np.argmax(q[s]))
            s2 = int(rng.choice(S, p=mdp.transition[s, a]))
            visits[s, a] += 1
            target = mdp.reward[s2] + mdp.gamma * cont[s2] * q[s2].max()
            q[s, a] += eta(visits[s, a]) * (target - q[s, a])
            s = s2
    return q
