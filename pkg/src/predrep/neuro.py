"""Predictive-map phenomenology: place fields, eigenvector grid fields,
track skew and need-times-gain replay prioritization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from predrep.explore import eigen_decompose_sr
from predrep.gridworld import GridWorld
from predrep.mdp import MDPError, TabularMDP

# ---------------------------------------------------------------- fields


@dataclass(frozen=True, eq=False)
class FieldMap:
    values: np.ndarray  # (height, width) grid, NaN on walls; or 1-D for tracks
    label: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "values": np.where(np.isnan(self.values), None, self.values).tolist()}


def _column(sr, j: int) -> np.ndarray:
    M = np.asarray(sr, dtype=float)
    if not 0 <= j < M.shape[1]:
        raise MDPError(f"state {j} out of range")
    return M[:, j]


def occupancy_from_sr(sr) -> np.ndarray:
    """``I + gamma M``: discounted occupancy counting the current state at t = 0."""
    M = np.asarray(sr, dtype=float)
    gamma = getattr(sr, "gamma", None)
    if gamma is None:
        raise MDPError("occupancy needs an SRMatrix carrying its discount")
    return np.eye(M.shape[0]) + gamma * M


def place_field(sr, state: int, grid: GridWorld | None = None) -> FieldMap:
    """Column ``M[:, state]``: how strongly each location predicts ``state``."""
    col = _column(sr, state)
    return FieldMap(grid.to_grid(col) if grid is not None else col.copy(), f"place:{state}")


def population_vector(sr, state: int, grid: GridWorld | None = None) -> FieldMap:
    """Row ``M[state, :]``: the population activity while at ``state``."""
    M = np.asarray(sr, dtype=float)
    if not 0 <= state < M.shape[0]:
        raise MDPError(f"state {state} out of range")
    row = M[state]
    return FieldMap(grid.to_grid(row) if grid is not None else row.copy(), f"population:{state}")


def grid_fields(sr, k: int, grid: GridWorld | None = None, non_negative: bool = False):
    """Top-``k`` eigenvectors of the symmetrized SR as maps, optionally rectified."""
    _, vecs = eigen_decompose_sr(sr, k)
    out = []
    for i in range(k):
        v = np.clip(vecs[:, i], 0.0, None) if non_negative else vecs[:, i]
        out.append(FieldMap(grid.to_grid(v) if grid is not None else v.copy(), f"eig:{i}"))
    return out


def significant_components(sr, rel: float = 0.5) -> int:
    """Number of symmetrized-SR eigenvalues at least ``rel`` times the largest."""
    vals, _ = eigen_decompose_sr(sr)
    return int(np.sum(vals >= rel * vals[0]))


def autocorrelation(field) -> np.ndarray:
    """Normalized 2-D spatial autocorrelation; walls (NaN) count as zero."""
    f = np.nan_to_num(np.asarray(field, dtype=float))
    f = f - f[f != 0].mean() if np.any(f != 0) else f
    ac = signal.correlate2d(f, f, mode="full")
    return ac / ac.max() if ac.max() > 0 else ac


def autocorr_peaks(ac, min_height: float = 0.1) -> list[tuple[int, int]]:
    """Local maxima of an autocorrelogram above ``min_height``, centre excluded."""
    ac = np.asarray(ac, dtype=float)
    local = ac == ndimage.maximum_filter(ac, size=3, mode="constant", cval=-np.inf)
    centre = (ac.shape[0] // 2, ac.shape[1] // 2)
    return [
        (int(i), int(j))
        for i, j in zip(*np.nonzero(local & (ac >= min_height)))
        if (i, j) != centre
    ]


def peak_angles(ac, min_height: float = 0.1) -> np.ndarray:
    """Angles (degrees, in [0, 180)) of autocorrelogram peaks around the centre."""
    ci, cj = ac.shape[0] // 2, ac.shape[1] // 2
    pk = autocorr_peaks(ac, min_height)
    return np.sort([np.degrees(np.arctan2(ci - i, j - cj)) % 180.0 for i, j in pk])


def ring_dft_alignment(vec) -> tuple[float, int]:
    """Best cosine between ``vec`` and a sinusoid subspace of the ring of its length.

    Each frequency ``f`` spans ``{cos, sin}(2 pi f x / n)``; the cosine is the
    norm of the projection onto that span over the norm of ``vec``.  Returns
    ``(cosine, frequency)``.
    """
    v = np.asarray(vec, dtype=float)
    n = v.size
    x = np.arange(n)
    best = (0.0, 0)
    for f in range(n // 2 + 1):
        basis = [np.cos(2 * np.pi * f * x / n)]
        if 0 < f < n / 2:
            basis.append(np.sin(2 * np.pi * f * x / n))
        B = np.stack(basis, axis=1)
        Q, _ = np.linalg.qr(B)
        cos = float(np.linalg.norm(Q.T @ v) / np.linalg.norm(v))
        if cos > best[0]:
            best = (cos, f)
    return best


def skew_metric(field, direction: int = 1, tol: float = 1e-12) -> tuple[float, bool]:
    """Signed skew ``(centre of mass - peak) * direction`` of a 1-D field.

    Negative values mean the field extends backward against the direction of
    travel.  The peak is the centre of the maximal plateau.  A flat field
    returns ``(0.0, True)``.
    """
    f = np.asarray(field, dtype=float)
    if f.ndim != 1:
        raise MDPError("skew needs a 1-D track field")
    if np.ptp(f) <= tol or f.sum() <= tol:
        return 0.0, True
    x = np.arange(f.size)
    com = float((x * f).sum() / f.sum())
    top = np.flatnonzero(f >= f.max() - tol)
    peak = float(top.mean())
    return (com - peak) * (1 if direction >= 0 else -1), False


# ---------------------------------------------------------------- replay


@dataclass(frozen=True)
class ReplayCandidate:
    state: int
    action: int
    need: float
    gain: float
    evb: float


def _greedy_dist(q_row, tol: float) -> np.ndarray:
    best = q_row.max()
    ties = q_row >= best - tol
    return ties / ties.sum()


def backup_target(mdp: TabularMDP, q, s: int, a: int) -> float:
    """Expected one-step backup ``sum_s' T(s'|s,a) [R(s') + gamma max Q(s')]``."""
    cont = np.where(mdp.terminal_mask, 0.0, 1.0)
    return float(mdp.transition[s, a] @ (mdp.reward + mdp.gamma * cont * q.max(axis=1)))


def backup_gain(mdp: TabularMDP, q, s: int, a: int, tol: float = 1e-12, min_gain: float = 0.0):
    """Policy-improvement gain of backing up ``(s, a)``.

    ``sum_a pi_new Q_new(s) - sum_a pi_old Q_new(s)`` with greedy policies
    spread uniformly over ties.  Returns ``(gain, new Q value)``.
    """
    q = np.asarray(q, dtype=float)
    q_new = q[s].copy()
    q_new[a] = backup_target(mdp, q, s, a)
    gain = _greedy_dist(q_new, tol) @ q_new - _greedy_dist(q[s], tol) @ q_new
    return max(float(gain), min_gain), q_new[a]


def default_candidates(mdp: TabularMDP):
    return [(s, a) for s in range(mdp.n_states) if not mdp.terminal_mask[s] for a in range(mdp.n_actions)]


def replay_priorities(
    sr, q, mdp: TabularMDP, agent_state: int, candidates=None, min_gain: float = 0.0
) -> list[ReplayCandidate]:
    """Score one-step backups by ``EVB = need * gain``, ranked descending.

    ``need = M(agent_state, s)``.  Ties keep candidate order (stable sort).
    """
    M = np.asarray(sr, dtype=float)
    q = np.asarray(q, dtype=float)
    cands = default_candidates(mdp) if candidates is None else list(candidates)
    out = []
    for s, a in cands:
        need = float(M[agent_state, s])
        gain, _ = backup_gain(mdp, q, s, a, min_gain=min_gain)
        out.append(ReplayCandidate(int(s), int(a), need, gain, need * gain))
    order = sorted(range(len(out)), key=lambda i: -out[i].evb)
    return [out[i] for i in order]


def replay_simulate(
    sr,
    q,
    mdp: TabularMDP,
    agent_state: int,
    candidates=None,
    threshold: float = 1e-9,
    max_backups: int = 100,
    min_gain: float = 0.0,
):
    """Repeatedly execute the highest-EVB backup while its EVB exceeds ``threshold``.

    Returns ``(executed candidates, updated Q)``; the input Q is not modified.
    """
    q = np.array(q, dtype=float)
    done = []
    for _ in range(max_backups):
        ranked = replay_priorities(sr, q, mdp, agent_state, candidates, min_gain)
        if not ranked or ranked[0].evb <= threshold:
            break
        best = ranked[0]
        q[best.state, best.action] = backup_target(mdp, q, best.state, best.action)
        done.append(best)
    return done, q
