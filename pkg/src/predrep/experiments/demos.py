"""Replay and neuro demos plus the single-module tasks behind the ``sr``,
``sf`` and ``explore`` subcommands.

Each runner returns a report; plot-ready matrices go under ``tables`` as
``{name: {"values": [[...]], "meta": {...}}}`` so the CLI can write them as
CSV files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from predrep import envs, explore, mdp as mdplib, neuro, sf as sflib, sr as srlib
from predrep.experiments.config import ConfigError, merge_defaults
from predrep.experiments.report import make_report
from predrep.gridworld import GridParseError, parse_gridworld
from predrep.rng import as_generator


def _table(values, **meta) -> dict:
    arr = np.asarray(values, dtype=float)
    return {"values": np.where(np.isnan(arr), None, arr).tolist(), "meta": meta}


def load_gridworld(env: dict, base_dir: Path | None = None):
    """Gridworld from inline text, a map file or a named generator."""
    options = {k: env[k] for k in ("goal_reward", "step_reward", "slip") if k in env}
    try:
        if "gridworld" in env:
            return parse_gridworld(env["gridworld"], **options)
        if "gridworld_file" in env:
            path = Path(env["gridworld_file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return parse_gridworld(path.read_text(), **options)
        gen = dict(env.get("generator", {"kind": "open_room", "height": 5, "width": 5}))
        kind = gen.pop("kind", "open_room")
        makers = {
            "open_room": envs.open_room,
            "four_rooms": envs.four_rooms,
            "two_rooms": envs.two_rooms,
            "trapezoid": envs.trapezoid_room,
            "anchor": envs.anchor_maze,
        }
        if kind not in makers:
            raise ConfigError(f"unknown environment generator {kind!r}")
        return makers[kind](**gen, **options)
    except (GridParseError, TypeError, OSError) as err:
        raise ConfigError(f"bad environment: {err}") from None


def _policy(mdp, name: str):
    if name == "uniform":
        return mdplib.uniform_policy(mdp)
    if name == "optimal":
        return mdplib.greedy_policy(mdplib.solve_q_optimal(mdp), tol=1e-9)
    raise ConfigError(f"unknown policy {name!r}; use 'uniform' or 'optimal'")


# ---------------------------------------------------------------- replay

REPLAY_DEFAULTS = {
    "experiment": "replay",
    "seeds": [0],
    "environment": {"gamma": 0.9, "generator": {"n_states": 8}},
    "params": {"agent_state": 0, "threshold": 1e-9, "max_backups": 100, "min_gain": 1e-3, "candidates": None},
}


def run_replay_demo(config: dict | None = None) -> dict:
    """Reverse replay after a reward discovery and forward ranking at trial start."""
    config = merge_defaults(config or {}, REPLAY_DEFAULTS)
    n = int(config["environment"]["generator"]["n_states"])
    gamma = config["environment"]["gamma"]
    p = config["params"]
    if not 2 <= n:
        raise ConfigError("the replay chain needs at least 2 states")
    chain = envs.linear_chain(n, gamma)
    cands = None if p["candidates"] is None else [tuple(c) for c in p["candidates"]]
    sr_uniform = srlib.sr_closed_form(chain, mdplib.uniform_policy(chain))
    reverse, _ = neuro.replay_simulate(
        sr_uniform, np.zeros((n, 2)), chain, p["agent_state"], cands, p["threshold"], p["max_backups"]
    )
    q_star = mdplib.solve_q_optimal(chain)
    sr_greedy = srlib.sr_closed_form(chain, mdplib.greedy_policy(q_star, tol=1e-9))
    ranked = neuro.replay_priorities(sr_greedy, q_star, chain, p["agent_state"], cands, p["min_gain"])
    forward = list(dict.fromkeys(c.state for c in ranked if c.need > 0))
    record = {
        "seed": config["seeds"][0],
        "reverse_sequence": [[c.state, c.action] for c in reverse],
        "reverse_evb": [c.evb for c in reverse],
        "forward_states": forward,
    }
    checks = {}
    if cands is None:
        checks["reverse_chain"] = [c.state for c in reverse[: n - 1]] == list(range(n - 2, -1, -1))
        checks["forward_order"] = forward == sorted(forward)
    records = [dict(record, seed=s) for s in config["seeds"]]
    return make_report("replay", config, records, {"chain_length": n}, checks)


# ---------------------------------------------------------------- neuro maps

NEURO_DEFAULTS = {
    "experiment": "neuro",
    "seeds": [0],
    "environment": {"gamma": 0.95},
    "params": {
        "room": 16,
        "trapezoid": [16, 16, 6],
        "k": 8,
        "track_length": 12,
        "p_forward": 0.9,
        "ring": 16,
        "place_states": [0],
    },
}


def run_neuro_maps(config: dict | None = None) -> dict:
    """Place fields, eigenvector maps (square and trapezoid), track skew, ring alignment."""
    config = merge_defaults(config or {}, NEURO_DEFAULTS)
    gamma = config["environment"]["gamma"]
    p = config["params"]
    tables, summary = {}, {}
    for name, grid in (("square", envs.open_room(p["room"], p["room"])), ("trapezoid", envs.trapezoid_room(*p["trapezoid"]))):
        mdp = grid.to_mdp(gamma)
        m = srlib.sr_closed_form(mdp, mdplib.uniform_policy(mdp), "uniform")
        for i, f in enumerate(neuro.grid_fields(m, p["k"], grid)):
            tables[f"{name}_eig{i}"] = _table(f.values, geometry=name, kind="eigenvector", index=i)
        for s in p["place_states"]:
            tables[f"{name}_place{s}"] = _table(neuro.place_field(m, s, grid).values, geometry=name, kind="place", state=s)
        summary[name] = {
            "significant_components": neuro.significant_components(m),
            "peak_angles": [
                neuro.peak_angles(neuro.autocorrelation(f.values)).tolist()
                for f in neuro.grid_fields(m, p["k"], grid)
            ],
        }
    n = p["track_length"]
    track = envs.track(n, gamma)
    skews = {}
    for label, pf in (("directional", p["p_forward"]), ("random_walk", 0.5)):
        occ = neuro.occupancy_from_sr(srlib.sr_closed_form(track, envs.directional_policy(n, pf)))
        skews[label] = [neuro.skew_metric(occ[:, j], 1)[0] for j in range(1, n - 1)]
        tables[f"track_{label}"] = _table(occ, kind="track occupancy", p_forward=pf)
    ring = envs.ring(p["ring"], gamma)
    _, vecs = explore.eigen_decompose_sr(srlib.sr_closed_form(ring, mdplib.uniform_policy(ring)), p["ring"])
    ring_cos = [neuro.ring_dft_alignment(vecs[:, i])[0] for i in range(vecs.shape[1])]
    summary.update(skew=skews, ring_cosine=ring_cos)
    checks = {
        "directional_skew_negative": all(x < 0 for x in skews["directional"]),
        "random_walk_skew_smaller": max(map(abs, skews["random_walk"])) < max(map(abs, skews["directional"])),
        "ring_sinusoids": min(ring_cos) >= 0.99,
        "trapezoid_distorts": summary["square"]["peak_angles"] != summary["trapezoid"]["peak_angles"],
    }
    records = [{"seed": s} for s in config["seeds"]]
    report = make_report("neuro", config, records, summary, checks)
    report["tables"] = tables
    return report


# ---------------------------------------------------------------- module tasks

SR_DEFAULTS = {
    "experiment": "sr",
    "seeds": [0],
    "environment": {"gamma": 0.9, "generator": {"kind": "open_room", "height": 5, "width": 5}},
    "params": {"policy": "uniform", "method": "closed_form", "n_steps": 200000},
}


def run_sr_task(config: dict | None = None, base_dir: Path | None = None) -> dict:
    config = merge_defaults(config or {}, SR_DEFAULTS)
    grid = load_gridworld(config["environment"], base_dir)
    mdp = grid.to_mdp(config["environment"]["gamma"])
    p = config["params"]
    pi = _policy(mdp, p["policy"])
    exact = srlib.sr_closed_form(mdp, pi, p["policy"])
    tables = {"sr": _table(exact.m, gamma=mdp.gamma, policy_id=p["policy"])}
    records, checks = [], {}
    residual = float(np.abs(srlib.sr_bellman_residual(mdp, pi, exact)).max())
    checks["bellman_residual"] = residual <= 1e-8
    if p["method"] == "td":
        for seed in config["seeds"]:
            learned = srlib.learn_sr_td(mdp, pi, p["n_steps"], seed, per_visit=True)
            err = float(np.abs(learned - exact.m).max())
            records.append({"seed": seed, "max_error": err})
            tables[f"sr_td_seed{seed}"] = _table(learned, gamma=mdp.gamma, policy_id=p["policy"], seed=seed)
    elif p["method"] != "closed_form":
        raise ConfigError(f"unknown SR method {p['method']!r}")
    else:
        records = [{"seed": s} for s in config["seeds"]]
    if not mdp.terminal_mask.any():
        sm = srlib.successor_model(exact)
        tables["successor_model"] = _table(sm.mu, gamma=mdp.gamma, policy_id=p["policy"])
    report = make_report("sr", config, records, {"bellman_residual": residual, "map": grid.to_text()}, checks)
    report["tables"] = tables
    return report


SF_DEFAULTS = {
    "experiment": "sf",
    "seeds": [0],
    "environment": {"gamma": 0.9, "generator": {"kind": "four_rooms"}},
    "params": {"train_states": [[0], [10]], "test_weights": None},
}


def run_sf_task(config: dict | None = None, base_dir: Path | None = None) -> dict:
    """SF library of policies optimal for rewards at chosen states, then GPI on a test task."""
    config = merge_defaults(config or {}, SF_DEFAULTS)
    grid = load_gridworld(config["environment"], base_dir)
    mdp = grid.to_mdp(config["environment"]["gamma"])
    phi = np.eye(mdp.n_states)
    train_ws = []
    for states in config["params"]["train_states"]:
        w = np.zeros(mdp.n_states)
        w[list(states)] = 1.0
        train_ws.append(w)
    library = []
    for i, w in enumerate(train_ws):
        task = mdplib.TabularMDP(mdp.gamma, mdp.transition, phi @ w, mdp.terminal_mask)
        library.append(sflib.sf_closed_form(mdp, _policy(task, "optimal"), phi, f"task{i}"))
    w_new = config["params"]["test_weights"]
    w_new = np.sum(train_ws, axis=0) if w_new is None else np.asarray(w_new, dtype=float)
    if w_new.shape != (mdp.n_states,):
        raise ConfigError(f"test_weights must have {mdp.n_states} entries")
    pi_gpi, winners = sflib.gpi_policy(library, w_new)
    task = mdplib.TabularMDP(mdp.gamma, mdp.transition, phi @ w_new, mdp.terminal_mask)
    q_gpi = mdplib.q_evaluation_exact(task, pi_gpi)
    margin = min(float(np.min(q_gpi - mdplib.q_evaluation_exact(task, sf.policy))) for sf in library)
    tables = {
        f"psi_{sf.policy_id}": _table(np.asarray(sf.psi).reshape(-1, mdp.n_states), gamma=mdp.gamma, policy_id=sf.policy_id, layout="state-action rows")
        for sf in library
    }
    agg = {"gpi_actions": pi_gpi.argmax(axis=1).tolist(), "gpi_winners": winners.tolist(), "min_margin": margin}
    report = make_report("sf", config, [{"seed": s} for s in config["seeds"]], agg, {"gpi_dominates_library": margin >= -1e-8})
    report["tables"] = tables
    return report


EXPLORE_DEFAULTS = {
    "experiment": "explore",
    "seeds": [0],
    "environment": {"gamma": 0.9, "generator": {"kind": "four_rooms"}},
    "params": {"k": 4, "n_rounds": 3, "samples_per_round": 500, "landmark_steps": 500},
}


def run_explore_task(config: dict | None = None, base_dir: Path | None = None) -> dict:
    """SR eigenvectors, discovered eigenoptions and an SFS landmark graph per seed."""
    config = merge_defaults(config or {}, EXPLORE_DEFAULTS)
    grid = load_gridworld(config["environment"], base_dir)
    mdp = grid.to_mdp(config["environment"]["gamma"])
    p = config["params"]
    m = srlib.sr_closed_form(mdp, mdplib.uniform_policy(mdp), "uniform")
    vals, vecs = explore.eigen_decompose_sr(m, p["k"])
    tables = {f"eig{i}": _table(grid.to_grid(vecs[:, i]), eigenvalue=float(vals[i])) for i in range(p["k"])}
    sfu = explore.uniform_sf(mdp)
    records = []
    for seed in config["seeds"]:
        rng = as_generator(seed)
        options = explore.discover_eigenoptions(mdp, p["n_rounds"], p["samples_per_round"], rng)
        states, graph = explore.landmark_explore(mdp, sfu, p["landmark_steps"], rng)
        records.append(
            {
                "seed": seed,
                "options": [o.to_dict() for o in options],
                "landmarks": graph.to_dict(),
                "visit_entropy": explore.visit_entropy(states, mdp.n_states),
            }
        )
    report = make_report("explore", config, records, {"eigenvalues": vals.tolist()}, {})
    report["tables"] = tables
    return report


