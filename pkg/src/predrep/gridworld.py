"""ASCII gridworlds and their tabular MDPs.

Map characters: ``#`` wall, ``.`` open, ``S`` start, ``G`` goal.  States
are the non-wall cells numbered row-major.  Actions are N, E, S, W
(0..3); moving into a wall or off the map leaves the agent in place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from predrep.mdp import MDPError, TabularMDP

ACTIONS = ("N", "E", "S", "W")
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
_CELLS = {"#", ".", "S", "G"}


class GridParseError(MDPError):
    pass


@dataclass(frozen=True, eq=False)
class GridWorld:
    cells: tuple[str, ...]  # one string per row
    slip: float = 0.0
    goal_reward: float = 1.0
    step_reward: float = 0.0
    goal_absorbing: bool = True

    def __post_init__(self):
        rows = tuple(self.cells)
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise GridParseError("map rows must all have the same length")
        bad = {c for r in rows for c in r} - _CELLS
        if bad:
            raise GridParseError(f"unknown map characters: {sorted(bad)}")
        if not any(c != "#" for r in rows for c in r):
            raise GridParseError("map has no open cells")
        if not 0.0 <= self.slip <= 1.0:
            raise GridParseError("slip must lie in [0, 1]")
        object.__setattr__(self, "cells", rows)
        coords = [(i, j) for i, r in enumerate(rows) for j, c in enumerate(r) if c != "#"]
        index = {xy: k for k, xy in enumerate(coords)}
        object.__setattr__(self, "_coords", coords)
        object.__setattr__(self, "_index", index)

    @property
    def height(self) -> int:
        return len(self.cells)

    @property
    def width(self) -> int:
        return len(self.cells[0])

    @property
    def n_states(self) -> int:
        return len(self._coords)

    @property
    def open_mask(self) -> np.ndarray:
        return np.array([[c != "#" for c in r] for r in self.cells])

    def coords(self, s: int) -> tuple[int, int]:
        return self._coords[s]

    def state_at(self, row: int, col: int) -> int | None:
        return self._index.get((row, col))

    def _states_marked(self, ch: str) -> list[int]:
        return [k for k, (i, j) in enumerate(self._coords) if self.cells[i][j] == ch]

    @property
    def starts(self) -> list[int]:
        return self._states_marked("S")

    @property
    def goals(self) -> list[int]:
        return self._states_marked("G")

    def neighbor(self, s: int, a: int) -> int:
        i, j = self._coords[s]
        di, dj = MOVES[a]
        return self._index.get((i + di, j + dj), s)

    def adjacency(self) -> np.ndarray:
        """Deterministic successor table ``next[s, a]``."""
        return np.array([[self.neighbor(s, a) for a in range(4)] for s in range(self.n_states)])

    def reward_vector(self) -> np.ndarray:
        r = np.full(self.n_states, float(self.step_reward))
        r[self.goals] = self.goal_reward
        return r

    def to_mdp(self, gamma: float = 0.9, reward=None) -> TabularMDP:
        n = self.n_states
        nxt = self.adjacency()
        T = np.zeros((n, 4, n))
        for s in range(n):
            for a in range(4):
                T[s, a, nxt[s, a]] += 1.0 - self.slip
                for b in range(4):
                    T[s, a, nxt[s, b]] += self.slip / 4
        terminal = np.zeros(n, dtype=bool)
        if self.goal_absorbing:
            for g in self.goals:
                T[g] = 0.0
                T[g, :, g] = 1.0
                terminal[g] = True
        r = self.reward_vector() if reward is None else reward
        return TabularMDP(gamma, T, r, terminal)

    def to_grid(self, values) -> np.ndarray:
        """Place a per-state vector on the map; walls become NaN."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_states,):
            raise MDPError(f"expected {self.n_states} values, got shape {values.shape}")
        grid = np.full((self.height, self.width), np.nan)
        for k, (i, j) in enumerate(self._coords):
            grid[i, j] = values[k]
        return grid

    def with_walls(self, walls) -> "GridWorld":
        """Copy with extra wall cells at the given (row, col) positions."""
        rows = [list(r) for r in self.cells]
        for i, j in walls:
            rows[i][j] = "#"
        return GridWorld(
            tuple("".join(r) for r in rows),
            self.slip,
            self.goal_reward,
            self.step_reward,
            self.goal_absorbing,
        )

    def to_text(self) -> str:
        return "\n".join(self.cells)


def parse_gridworld(text: str, **options) -> GridWorld:
    """Parse an ASCII map; keyword options are passed to :class:`GridWorld`."""
    lines = [ln.strip() for ln in text.strip("\n").splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise GridParseError("empty map")
    return GridWorld(tuple(lines), **options)
