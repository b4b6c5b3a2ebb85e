"""Reconfigurable-maze navigation with model-free, model-based and SR agents.

Agents first learn an open 10x10 room (start on the left, goal on the right
of the same row).  They then face a sequence of barrier configurations,
each a wall segment across the start-goal row, for a fixed number of trials
per configuration.  Each configuration replaces the previous barrier, so a
new configuration both blocks a known route and opens a previously blocked
one.  Performance is steps-to-goal per trial.
"""

from __future__ import annotations

import numpy as np
import networkx as nx
from scipy import stats

from predrep.experiments.config import ConfigError, merge_defaults
from predrep.experiments.report import make_report
from predrep.gridworld import MOVES
from predrep.rng import spawn
from predrep.sr import sr_td_step
from predrep.tcm import sr_td_error

DEFAULTS = {
    "experiment": "navigation",
    "seeds": list(range(20)),
    "environment": {"gamma": 0.95, "generator": {"size": 10, "start": [4, 0], "goal": [4, 9]}},
    "agents": [
        {"type": "MB", "params": {"heuristic": "none"}},
        {"type": "SR", "params": {"eta": 0.5, "reward_rate": 0.5, "epsilon": 0.1, "replay": 5}},
        {"type": "MF", "params": {"alpha": 0.5, "lam": 0.8, "epsilon": 0.1}},
    ],
    "phases": {"training_trials": 40, "configurations": 10, "trials_per_configuration": 10},
    "params": {
        "max_steps": 400,
        "barrier_length": [3, 7],
        "barrier_columns": [2, 7],
        "configurations": None,
        "alpha_test": 0.05,
    },
}


class Maze:
    """Deterministic 4-connected grid; moving into a wall or the border stays put."""

    def __init__(self, size: int, start, goal, walls=()):
        self.size = size
        self.start = size * start[0] + start[1]
        self.goal = size * goal[0] + goal[1]
        self.walls = frozenset(size * r + c for r, c in walls)
        if self.start in self.walls or self.goal in self.walls:
            raise ConfigError("start or goal lies inside a barrier")
        n = size * size
        self.next = np.empty((n, 4), dtype=int)
        for s in range(n):
            r, c = divmod(s, size)
            for a, (dr, dc) in enumerate(MOVES):
                rr, cc = r + dr, c + dc
                ok = 0 <= rr < size and 0 <= cc < size and size * rr + cc not in self.walls
                self.next[s, a] = size * rr + cc if ok else s

    @property
    def n_states(self) -> int:
        return self.size * self.size

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n_states))
        g.add_edges_from((s, int(t)) for s in range(self.n_states) for t in self.next[s] if t != s)
        return g

    def shortest_length(self) -> int | None:
        try:
            return nx.shortest_path_length(self.graph(), self.start, self.goal)
        except nx.NetworkXNoPath:
            return None


def random_barrier(rng, size, start, goal, lengths, columns):
    """Vertical wall segment crossing the start-goal row, goal kept reachable."""
    row = start[0]
    while True:
        col = int(rng.integers(columns[0], columns[1] + 1))
        length = int(rng.integers(lengths[0], lengths[1] + 1))
        top = int(rng.integers(max(0, row - length + 1), min(row, size - length) + 1))
        walls = [(r, col) for r in range(top, top + length)]
        maze = Maze(size, start, goal, walls)
        if maze.shortest_length() is not None:
            return walls


def validate_configurations(configs, size, start, goal):
    for walls in configs:
        if Maze(size, start, goal, [tuple(w) for w in walls]).shortest_length() is None:
            raise ConfigError(f"goal unreachable in configuration {walls}")


def _argmax_random(values, rng):
    best = np.flatnonzero(values >= values.max() - 1e-12)
    return int(best[0] if best.size == 1 else rng.choice(best))


class MBAgent:
    """Learns the deterministic successor of each move; plans by search on that map.

    Untried moves are assumed to succeed.  Planning is uniform-cost search
    (breadth first, unit costs) or A* with a Manhattan heuristic.
    """

    def __init__(self, maze: Maze, rng, heuristic: str = "none"):
        if heuristic not in ("none", "manhattan"):
            raise ConfigError(f"unknown heuristic {heuristic!r}")
        self.size, self.goal, self.rng, self.heuristic = maze.size, maze.goal, rng, heuristic
        self.model = Maze(maze.size, divmod(maze.start, maze.size), divmod(maze.goal, maze.size)).next.copy()
        self._plan = None

    def _graph(self):
        g = nx.DiGraph()
        g.add_nodes_from(range(self.model.shape[0]))
        g.add_edges_from(
            (s, int(t)) for s in range(self.model.shape[0]) for t in self.model[s] if t != s
        )
        return g

    def _path(self, s):
        g = self._graph()
        if self.heuristic == "manhattan":
            def h(u, v):
                (r1, c1), (r2, c2) = divmod(u, self.size), divmod(v, self.size)
                return abs(r1 - r2) + abs(c1 - c2)

            return nx.astar_path(g, s, self.goal, heuristic=h)
        return nx.shortest_path(g, s, self.goal)

    def act(self, s):
        if self._plan is None or not self._plan or self._plan[0] != s:
            try:
                self._plan = self._path(s)
            except nx.NetworkXNoPath:
                self._plan = None
                return int(self.rng.integers(4))
        nxt = self._plan[1]
        return int(np.flatnonzero(self.model[s] == nxt)[0])

    def observe(self, s, a, s2, r, done):
        if self.model[s, a] != s2:
            self.model[s, a] = s2
            self._plan = None
        elif self._plan and len(self._plan) > 1 and self._plan[1] == s2:
            self._plan = self._plan[1:]

    def begin_trial(self):
        self._plan = None


class SRAgent:
    """TD-learned state SR and reward vector; one-step lookahead through learned moves.

    With ``omega < 1`` the SR update runs through a drifting context trace,
    which acts as an eligibility trace over recently visited states.  With
    ``replay > 0`` each real step is followed by that many offline TD updates
    of ``M`` on remembered moves.
    """

    def __init__(
        self, maze: Maze, rng, gamma, eta=0.3, reward_rate=0.5, epsilon=0.05, omega=1.0, replay=0
    ):
        n = maze.n_states
        self.rng, self.gamma, self.eta, self.rate, self.eps = rng, gamma, eta, reward_rate, epsilon
        self.omega, self.replay = omega, replay
        self.visited = np.zeros(n, dtype=bool)
        self.trace = None
        self.m = np.zeros((n, n))
        self.r_hat = np.zeros(n)
        self.term = np.zeros(n, dtype=bool)
        self.model = Maze(maze.size, divmod(maze.start, maze.size), divmod(maze.goal, maze.size)).next.copy()

    def q(self, s):
        nxt = self.model[s]
        v = self.m[nxt] @ self.r_hat
        return self.r_hat[nxt] + self.gamma * np.where(self.term[nxt], 0.0, v)

    def act(self, s):
        if self.rng.random() < self.eps:
            return int(self.rng.integers(4))
        return _argmax_random(self.q(s), self.rng)

    def observe(self, s, a, s2, r, done):
        self.model[s, a] = s2
        self.term[s2] |= done
        if self.omega == 1.0:
            self.m[s] += self.eta * sr_td_error(self.m, s, s2, self.gamma, done)
        else:
            self.m, self.trace = sr_td_step(
                self.m, s, s2, self.eta, self.gamma, self.omega, self.trace, done
            )
        self.r_hat[s2] += self.rate * (r - self.r_hat[s2])
        self.visited[s] = True
        self._replay()

    def _replay(self):
        # offline TD on remembered moves: s uniform over visited states, a from
        # the current epsilon-greedy policy, s' from the learned move table
        states = np.flatnonzero(self.visited & ~self.term)
        for _ in range(self.replay if states.size else 0):
            s = int(self.rng.choice(states))
            a = self.act(s)
            s2 = int(self.model[s, a])
            self.m[s] += self.eta * sr_td_error(self.m, s, s2, self.gamma, bool(self.term[s2]))

    def begin_trial(self):
        self.trace = None


class MFAgent:
    """Q(lambda) with replacing traces (traces kept through exploratory moves)."""

    def __init__(self, maze: Maze, rng, gamma, alpha=0.3, lam=0.8, epsilon=0.05):
        self.rng, self.gamma, self.alpha, self.lam, self.eps = rng, gamma, alpha, lam, epsilon
        self.q = np.zeros((maze.n_states, 4))
        self.e = np.zeros_like(self.q)

    def act(self, s):
        if self.rng.random() < self.eps:
            return int(self.rng.integers(4))
        return _argmax_random(self.q[s], self.rng)

    def observe(self, s, a, s2, r, done):
        delta = r + (0.0 if done else self.gamma * self.q[s2].max()) - self.q[s, a]
        self.e *= self.gamma * self.lam
        self.e[s] = 0.0
        self.e[s, a] = 1.0
        self.q += self.alpha * delta * self.e

    def begin_trial(self):
        self.e[:] = 0.0


def make_agent(kind, maze, rng, gamma, params):
    try:
        return _make_agent(kind, maze, rng, gamma, params)
    except TypeError as err:
        raise ConfigError(f"bad parameters for agent {kind!r}: {err}") from None


def _make_agent(kind, maze, rng, gamma, params):
    if kind == "MB":
        return MBAgent(maze, rng, **params)
    if kind == "SR":
        return SRAgent(maze, rng, gamma, **params)
    if kind == "MF":
        return MFAgent(maze, rng, gamma, **params)
    raise ConfigError(f"agent type {kind!r} is not supported by the navigation experiment")


def run_trial(agent, maze: Maze, max_steps: int) -> int:
    agent.begin_trial()
    s = maze.start
    for t in range(1, max_steps + 1):
        a = agent.act(s)
        s2 = int(maze.next[s, a])
        done = s2 == maze.goal
        agent.observe(s, a, s2, 1.0 if done else 0.0, done)
        if done:
            return t
        s = s2
    return max_steps


def run_seed(seed: int, config: dict) -> dict:
    gen = config["environment"]["generator"]
    size, start, goal = gen["size"], tuple(gen["start"]), tuple(gen["goal"])
    gamma = config["environment"]["gamma"]
    phases, params = config["phases"], config["params"]
    layout_rng, *agent_rngs = spawn(seed, 1 + len(config["agents"]))
    if params["configurations"] is not None:
        layouts = [[tuple(w) for w in walls] for walls in params["configurations"]]
    else:
        layouts = [
            random_barrier(layout_rng, size, start, goal, params["barrier_length"], params["barrier_columns"])
            for _ in range(phases["configurations"])
        ]
    open_maze = Maze(size, start, goal)
    mazes = [Maze(size, start, goal, walls) for walls in layouts]
    record = {
        "seed": seed,
        "layouts": [[list(w) for w in walls] for walls in layouts],
        "shortest": [m.shortest_length() for m in mazes],
        "training": {},
        "steps": {},
    }
    for agent_spec, rng in zip(config["agents"], agent_rngs):
        kind = agent_spec["type"]
        agent = make_agent(kind, open_maze, rng, gamma, agent_spec.get("params", {}))
        record["training"][kind] = [
            run_trial(agent, open_maze, params["max_steps"]) for _ in range(phases["training_trials"])
        ]
        record["steps"][kind] = [
            [run_trial(agent, maze, params["max_steps"]) for _ in range(phases["trials_per_configuration"])]
            for maze in mazes
        ]
    return record


def seed_metrics(record: dict) -> dict:
    """Per agent: mean first-trial steps and mean area under the learning curve."""
    out = {}
    for kind, curves in record["steps"].items():
        arr = np.asarray(curves, dtype=float)
        out[kind] = {"first_trial": float(arr[:, 0].mean()), "auc": float(arr.sum(axis=1).mean())}
    return out


def aggregate(records: list, config: dict) -> tuple[dict, dict]:
    kinds = [a["type"] for a in config["agents"]]
    metrics = [seed_metrics(r) for r in records]
    agg = {"median_first_trial": {}, "median_auc": {}, "mean_curve": {}, "wilcoxon_auc": {}}
    for k in kinds:
        agg["median_first_trial"][k] = float(np.median([m[k]["first_trial"] for m in metrics]))
        agg["median_auc"][k] = float(np.median([m[k]["auc"] for m in metrics]))
        curves = np.asarray([r["steps"][k] for r in records], dtype=float)
        agg["mean_curve"][k] = curves.mean(axis=(0, 1)).tolist()
    checks = {}
    order = [k for k in ("MB", "SR", "MF") if k in kinds]
    alpha = config["params"]["alpha_test"]
    for lo, hi in zip(order[:-1], order[1:]):
        a = np.array([m[lo]["auc"] for m in metrics])
        b = np.array([m[hi]["auc"] for m in metrics])
        p = float(stats.wilcoxon(a, b, alternative="less").pvalue) if np.any(a != b) else 1.0
        agg["wilcoxon_auc"][f"{lo}<{hi}"] = p
        checks[f"first_trial:{lo}<={hi}"] = (
            agg["median_first_trial"][lo] <= agg["median_first_trial"][hi]
        )
        checks[f"auc:{lo}<{hi}"] = (agg["median_auc"][lo] < agg["median_auc"][hi]) and p < alpha
    return agg, checks


def run_navigation(config: dict | None = None) -> dict:
    config = merge_defaults(config or {}, DEFAULTS)
    gen = config["environment"]["generator"]
    if config["params"]["configurations"] is not None:
        validate_configurations(
            config["params"]["configurations"], gen["size"], tuple(gen["start"]), tuple(gen["goal"])
        )
    for agent_spec in config["agents"]:
        if agent_spec["type"] not in ("MB", "SR", "MF"):
            raise ConfigError(f"agent type {agent_spec['type']!r} is not supported by the navigation experiment")
    records = [run_seed(seed, config) for seed in config["seeds"]]
    agg, checks = aggregate(records, config)
    return make_report("navigation", config, records, agg, checks)
