"""Canned environments used by the tests, demos and experiment harness."""

from __future__ import annotations

import numpy as np

from predrep.gridworld import GridWorld, parse_gridworld
from predrep.mdp import TabularMDP
from predrep.rng import as_generator


def swap_chain(gamma: float = 0.5, reward=(0.0, 1.0)) -> TabularMDP:
    """Two states; both actions swap them."""
    T = np.zeros((2, 2, 2))
    T[0, :, 1] = 1.0
    T[1, :, 0] = 1.0
    return TabularMDP(gamma, T, np.asarray(reward, dtype=float))


def stay_swap_chain(gamma: float = 0.5, reward=(0.0, 1.0)) -> TabularMDP:
    """Two states; action 0 stays, action 1 swaps."""
    T = np.zeros((2, 2, 2))
    T[0, 0, 0] = T[1, 0, 1] = 1.0
    T[0, 1, 1] = T[1, 1, 0] = 1.0
    return TabularMDP(gamma, T, np.asarray(reward, dtype=float))


def absorbing_state(gamma: float = 0.5, reward: float = 0.0) -> TabularMDP:
    return TabularMDP(gamma, np.ones((1, 1, 1)), np.array([reward]))


def random_mdp(
    n_states: int,
    n_actions: int,
    rng=None,
    gamma: float | None = None,
    gamma_range=(0.5, 0.95),
    concentration: float = 1.0,
) -> TabularMDP:
    """Dense random MDP: Dirichlet transition rows and standard-normal rewards."""
    rng = as_generator(rng)
    T = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    T /= T.sum(axis=2, keepdims=True)
    R = rng.standard_normal(n_states)
    if gamma is None:
        gamma = float(rng.uniform(*gamma_range))
    return TabularMDP(gamma, T, R)


def random_policy(mdp: TabularMDP, rng=None, concentration: float = 1.0) -> np.ndarray:
    rng = as_generator(rng)
    pi = rng.dirichlet(np.full(mdp.n_actions, concentration), size=mdp.n_states)
    return pi / pi.sum(axis=1, keepdims=True)


def ring(n_states: int, gamma: float = 0.9) -> TabularMDP:
    """Cycle of ``n_states``; action 0 steps clockwise, action 1 counter-clockwise."""
    T = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        T[s, 0, (s + 1) % n_states] = 1.0
        T[s, 1, (s - 1) % n_states] = 1.0
    return TabularMDP(gamma, T, np.zeros(n_states))


def track(n_states: int, gamma: float = 0.9) -> TabularMDP:
    """Linear track; action 0 moves forward (+1), action 1 back; ends bump."""
    T = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        T[s, 0, min(s + 1, n_states - 1)] = 1.0
        T[s, 1, max(s - 1, 0)] = 1.0
    return TabularMDP(gamma, T, np.zeros(n_states))


def directional_policy(n_states: int, p_forward: float) -> np.ndarray:
    return np.tile([p_forward, 1.0 - p_forward], (n_states, 1))


def linear_chain(n_states: int, gamma: float = 0.9, reward: float = 1.0) -> TabularMDP:
    """Deterministic chain ``0 -> 1 -> ... -> n-1`` with a terminal rewarded end.

    Action 0 advances, action 1 stays put (a dominated action).
    """
    T = np.zeros((n_states, 2, n_states))
    for s in range(n_states - 1):
        T[s, 0, s + 1] = 1.0
        T[s, 1, s] = 1.0
    T[n_states - 1, :, n_states - 1] = 1.0
    R = np.zeros(n_states)
    R[-1] = reward
    term = np.zeros(n_states, dtype=bool)
    term[-1] = True
    return TabularMDP(gamma, T, R, term)


def open_room(height: int, width: int, **options) -> GridWorld:
    return GridWorld(tuple("." * width for _ in range(height)), **options)


# 11x11 interior of the classic four-rooms layout; doors sit in the wall lines.
FOUR_ROOMS = """
.....#.....
.....#.....
...........
.....#.....
.....#.....
#.####.....
.....###.##
.....#.....
.....#.....
...........
.....#.....
"""


def four_rooms(**options) -> GridWorld:
    return parse_gridworld(FOUR_ROOMS, **options)


TWO_ROOMS = """
..#...
..#...
......
..#...
..#...
..#...
"""


def two_rooms(**options) -> GridWorld:
    """6x6 map split by a wall with a single doorway."""
    return parse_gridworld(TWO_ROOMS, **options)


# Reconstructed anchor maze.  States are labelled s1..s25 row-major (1-based);
# the agent sits at s13 next to the dead-end pocket s14 and the goal is s5.
ANCHOR_MAZE = """
....G
.#...
.###.
.#..#
.#.##
.#...
.....
"""
ANCHOR_GAMMA = 0.96


def anchor_maze(**options) -> GridWorld:
    """Anchor maze with goal +1 and a -0.1 cost on every other state."""
    options.setdefault("goal_reward", 1.0)
    options.setdefault("step_reward", -0.1)
    return parse_gridworld(ANCHOR_MAZE, **options)


def label(k: int) -> int:
    """State index of the 1-based label ``s_k`` used with :data:`ANCHOR_MAZE`."""
    return k - 1


def trapezoid_room(height: int, bottom: int, top: int, **options) -> GridWorld:
    """Rasterized trapezoid: width shrinks linearly from ``bottom`` to ``top``."""
    rows = []
    for i in range(height):
        frac = i / max(height - 1, 1)
        w = int(round(top + (bottom - top) * frac))
        pad = bottom - w
        left = pad // 2
        rows.append("#" * left + "." * w + "#" * (pad - left))
    return GridWorld(tuple(rows), **options)
