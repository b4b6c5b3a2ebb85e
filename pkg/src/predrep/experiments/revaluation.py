"""Reward, transition and policy revaluation on a two-stage decision task.

States (0-based index in brackets): first stage s1 [0], s2 [1]; second
stage s3..s6 [2..5]; terminal outcomes s7..s10 [6..9].  From s1 action 0
leads to s3 and action 1 to s4; from s2 action 0 leads to s5 and action 1
to s6; each second-stage state leads to one outcome (s3->s7, s4->s8,
s5->s9, s6->s10).  Training rewards are s7 = 10, s9 = 1, others 0.

Learning phase: trials start in s1 or s2 and follow an epsilon-greedy
behaviour policy for the training task.  Revaluation phase: trials start in
a second-stage state only, so first-stage estimates can only change through
the agent's internal model.  Test: each agent chooses the first-stage state
with the higher estimated value.

Conditions
    reward      outcome rewards of s7 and s9 are swapped
    transition  s3 now leads to s9 and s5 to s7
    policy      s10 (off the trained greedy path) now pays 20
    control     nothing changes
"""

from __future__ import annotations

import numpy as np

from predrep import mdp as mdplib
from predrep.experiments.config import ConfigError, merge_defaults
from predrep.experiments.report import make_report
from predrep.mdp import TabularMDP
from predrep.rng import spawn
from predrep.sr import sr_td_step

N_STATES = 10
S1, S2 = 0, 1
STAGE2 = (2, 3, 4, 5)
OUTCOMES = (6, 7, 8, 9)
CONDITIONS = ("reward", "transition", "policy", "control")

EXPECTED = {
    "MF": {"reward": S1, "transition": S1, "policy": S1, "control": S1},
    "MB": {"reward": S2, "transition": S2, "policy": S2, "control": S1},
    "SR": {"reward": S2, "transition": S1, "policy": S1, "control": S1},
}

DEFAULTS = {
    "experiment": "revaluation",
    "seeds": list(range(100)),
    "environment": {"gamma": 0.9},
    "agents": [
        {"type": "MF", "params": {"alpha": 0.1}},
        {"type": "MB", "params": {"rate": 0.5}},
        {"type": "SR", "params": {"eta": 0.1, "reward_rate": 0.5}},
    ],
    "phases": {"learning_trials": 200, "revaluation_trials": 100, "conditions": list(CONDITIONS)},
    "params": {"epsilon": 0.1, "threshold": 0.95},
}


def task(condition: str = "control", gamma: float = 0.9) -> tuple[TabularMDP, TabularMDP]:
    """``(training MDP, revalued MDP)`` for one condition."""
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown revaluation condition {condition!r}")
    T = np.zeros((N_STATES, 2, N_STATES))
    T[S1, 0, 2], T[S1, 1, 3] = 1.0, 1.0
    T[S2, 0, 4], T[S2, 1, 5] = 1.0, 1.0
    for s, o in zip(STAGE2, OUTCOMES):
        T[s, :, o] = 1.0
    for o in OUTCOMES:
        T[o, :, o] = 1.0
    R = np.zeros(N_STATES)
    R[6], R[8] = 10.0, 1.0
    term = np.zeros(N_STATES, dtype=bool)
    term[list(OUTCOMES)] = True
    train = TabularMDP(gamma, T, R, term)

    T2, R2 = T.copy(), R.copy()
    if condition == "reward":
        R2[6], R2[8] = 1.0, 10.0
    elif condition == "transition":
        T2[2, :, :] = 0.0
        T2[4, :, :] = 0.0
        T2[2, :, 8], T2[4, :, 6] = 1.0, 1.0
    elif condition == "policy":
        R2[9] = 20.0
    return train, TabularMDP(gamma, T2, R2, term)


def behaviour_policy(mdp: TabularMDP, epsilon: float, tol: float = 1e-9) -> np.ndarray:
    """Epsilon-greedy on the optimal Q, with greedy mass split evenly over tied actions."""
    q = mdplib.solve_q_optimal(mdp)
    ties = q >= q.max(axis=1, keepdims=True) - tol
    greedy = ties / ties.sum(axis=1, keepdims=True)
    return (1.0 - epsilon) * greedy + epsilon / q.shape[1]


def generate_stream(train, reval, epsilon, n_learn, n_reval, rng):
    """Shared experience for all agents.

    Returns ``(transitions, n_learning)``: a list of ``(s, a, s')`` tuples and
    how many of them belong to the learning phase.
    """
    out, n_learning = [], 0
    pi = behaviour_policy(train, epsilon)
    for mdp, n, starts in ((train, n_learn, (S1, S2)), (reval, n_reval, STAGE2)):
        for _ in range(n):
            s = int(rng.choice(starts))
            while not mdp.terminal_mask[s]:
                a = int(rng.choice(2, p=pi[s]))
                s2 = int(rng.choice(N_STATES, p=mdp.transition[s, a]))
                out.append((s, a, s2))
                s = s2
        if mdp is train:
            n_learning = len(out)
    return out, n_learning


class MFAgent:
    """Q-learning; first-stage values change only when those states are visited."""

    def __init__(self, gamma, alpha=0.1):
        self.gamma, self.alpha = gamma, alpha
        self.q = np.zeros((N_STATES, 2))

    def observe(self, s, a, s2, r, terminal):
        target = r + (0.0 if terminal else self.gamma * self.q[s2].max())
        self.q[s, a] += self.alpha * (target - self.q[s, a])

    def values(self):
        return self.q.max(axis=1)


class MBAgent:
    """Delta-rule transition and reward models, planned exactly by value iteration."""

    def __init__(self, gamma, rate=0.5):
        self.gamma, self.rate = gamma, rate
        self.t_hat = np.zeros((N_STATES, 2, N_STATES))
        self.r_hat = np.zeros(N_STATES)
        self.terminal = np.zeros(N_STATES, dtype=bool)

    def observe(self, s, a, s2, r, terminal):
        self.t_hat[s, a] += self.rate * (np.eye(N_STATES)[s2] - self.t_hat[s, a])
        self.r_hat[s2] += self.rate * (r - self.r_hat[s2])
        self.terminal[s2] |= terminal

    def values(self):
        mass = self.t_hat.sum(axis=2, keepdims=True)
        t = np.divide(self.t_hat, mass, out=np.zeros_like(self.t_hat), where=mass > 0)
        cont = np.where(self.terminal, 0.0, 1.0)
        v = np.zeros(N_STATES)
        for _ in range(100):
            v_new = (t @ (self.r_hat + self.gamma * cont * v)).max(axis=1)
            if np.max(np.abs(v_new - v)) < 1e-12:
                break
            v = v_new
        return v_new


class SRAgent:
    """TD-learned state SR under the experienced behaviour plus a delta-rule reward model.

    ``omega < 1`` turns it into the temporal-context variant (TCM-SR), whose
    context trace is reset at the start of each trial.
    """

    def __init__(self, gamma, eta=0.1, reward_rate=0.5, omega=1.0):
        self.gamma, self.eta, self.rate, self.omega = gamma, eta, reward_rate, omega
        self.m = np.zeros((N_STATES, N_STATES))
        self.r_hat = np.zeros(N_STATES)
        self.trace = None

    def observe(self, s, a, s2, r, terminal):
        self.m, self.trace = sr_td_step(
            self.m, s, s2, self.eta, self.gamma, self.omega, self.trace, terminal
        )
        self.r_hat[s2] += self.rate * (r - self.r_hat[s2])
        if terminal:
            self.trace = None

    def values(self):
        return self.m @ self.r_hat


def make_agent(kind: str, gamma: float, params: dict):
    try:
        return _make_agent(kind, gamma, params)
    except TypeError as err:
        raise ConfigError(f"bad parameters for agent {kind!r}: {err}") from None


def _make_agent(kind: str, gamma: float, params: dict):
    if kind == "MF":
        return MFAgent(gamma, **params)
    if kind == "MB":
        return MBAgent(gamma, **params)
    if kind in ("SR", "TCM-SR"):
        params = dict(params)
        if kind == "TCM-SR":
            params.setdefault("omega", 0.5)
        return SRAgent(gamma, **params)
    raise ConfigError(f"agent type {kind!r} is not supported by the revaluation experiment")


def run_seed(seed: int, condition: str, config: dict) -> dict:
    gamma = config["environment"]["gamma"]
    train, reval = task(condition, gamma)
    (rng,) = spawn([seed, CONDITIONS.index(condition)], 1)
    stream, n_learning = generate_stream(
        train,
        reval,
        config["params"]["epsilon"],
        config["phases"]["learning_trials"],
        config["phases"]["revaluation_trials"],
        rng,
    )
    record = {"seed": seed, "condition": condition, "choices": {}, "values": {}}
    for agent_spec in config["agents"]:
        agent = make_agent(agent_spec["type"], gamma, agent_spec.get("params", {}))
        for i, (s, a, s2) in enumerate(stream):
            mdp = train if i < n_learning else reval
            agent.observe(s, a, s2, float(mdp.reward[s2]), bool(mdp.terminal_mask[s2]))
        v = agent.values()
        choice = "s1" if v[S1] > v[S2] else "s2" if v[S2] > v[S1] else "tie"
        record["choices"][agent_spec["type"]] = choice
        record["values"][agent_spec["type"]] = [float(v[S1]), float(v[S2])]
    return record


def aggregate(records: list, config: dict) -> tuple[dict, dict]:
    """Choice frequencies per (agent, condition) and the expected-signature checks."""
    freq, checks = {}, {}
    threshold = config["params"]["threshold"]
    for agent_spec in config["agents"]:
        kind = agent_spec["type"]
        freq[kind] = {}
        for cond in config["phases"]["conditions"]:
            rows = [r["choices"][kind] for r in records if r["condition"] == cond]
            counts = {c: rows.count(c) for c in ("s1", "s2", "tie")}
            freq[kind][cond] = {c: n / len(rows) for c, n in counts.items()}
            want = EXPECTED.get(kind, {}).get(cond)
            if want is not None:
                label = "s1" if want == S1 else "s2"
                checks[f"{kind}:{cond}:{label}"] = freq[kind][cond][label] >= threshold
    return freq, checks


def run_revaluation(config: dict | None = None) -> dict:
    config = merge_defaults(config or {}, DEFAULTS)
    for cond in config["phases"]["conditions"]:
        if cond not in CONDITIONS:
            raise ConfigError(f"unknown revaluation condition {cond!r}")
    for agent_spec in config["agents"]:
        make_agent(agent_spec["type"], 0.9, agent_spec.get("params", {}))  # fail early on bad agents
    records = [
        run_seed(seed, cond, config)
        for seed in config["seeds"]
        for cond in config["phases"]["conditions"]
    ]
    freq, checks = aggregate(records, config)
    records = sorted(records, key=lambda r: (r["seed"], CONDITIONS.index(r["condition"])))
    return make_report("revaluation", config, records, {"choice_frequency": freq}, checks)
