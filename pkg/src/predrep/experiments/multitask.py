"""Multi-task transfer with successor features and GPI on a two-step world.

From the start state s0 the agent picks one of three first-stage states,
then one of three outcomes; outcome states carry feature vectors and end
the episode.  Two policies are trained (optimal for ``[1, 0, 0]`` and
``[0, 1, 0]``) and GPI over their SFs is tested on new task vectors.  The
outcome features are a parameterized reconstruction chosen so that on
``[1, 1, 1]`` GPI reuses the better training policy although the best route
(the ``[6, 6, 6]`` outcome) is chosen by neither training policy.
"""

from __future__ import annotations

import numpy as np

from predrep import envs, mdp as mdplib
from predrep.experiments.config import ConfigError, merge_defaults
from predrep.experiments.report import make_report
from predrep.mdp import TabularMDP
from predrep.rng import as_generator
from predrep.sf import gpi_action, gpi_policy, sf_closed_form

OUTCOME_FEATURES = [
    [[10.0, 0.0, 2.0], [0.0, 0.0, 1.0], [2.0, 1.0, 0.0]],
    [[0.0, 10.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 2.0]],
    [[6.0, 6.0, 6.0], [8.0, 0.0, 0.0], [0.0, 8.0, 0.0]],
]

DEFAULTS = {
    "experiment": "multitask",
    "seeds": [0],
    "environment": {"gamma": 0.9, "generator": {"outcome_features": OUTCOME_FEATURES}},
    "params": {
        "train_tasks": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        "test_tasks": [[1.0, 1.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.5, 0.0]],
        "random_worlds": 20,
        "tol": 1e-8,
    },
}


def two_step_world(outcome_features=OUTCOME_FEATURES, gamma: float = 0.9):
    """``(mdp, features)``: states are s0, three first-stage states, then 3x3 outcomes."""
    feats = np.asarray(outcome_features, dtype=float)
    n_first, n_out, k = feats.shape
    n = 1 + n_first + n_first * n_out
    n_actions = max(n_first, n_out)
    T = np.zeros((n, n_actions, n))
    for a in range(n_actions):
        T[0, a, 1 + min(a, n_first - 1)] = 1.0
    phi = np.zeros((n, k))
    term = np.zeros(n, dtype=bool)
    for i in range(n_first):
        for b in range(n_actions):
            o = 1 + n_first + i * n_out + min(b, n_out - 1)
            T[1 + i, b, o] = 1.0
    for i in range(n_first):
        for j in range(n_out):
            o = 1 + n_first + i * n_out + j
            T[o, :, o] = 1.0
            term[o] = True
            phi[o] = feats[i, j]
    return TabularMDP(gamma, T, np.zeros(n), term), phi


def with_task(mdp: TabularMDP, phi, w) -> TabularMDP:
    return TabularMDP(mdp.gamma, mdp.transition, np.asarray(phi) @ np.asarray(w), mdp.terminal_mask)


def optimal_policy(mdp: TabularMDP) -> np.ndarray:
    return mdplib.greedy_policy(mdplib.solve_q_optimal(mdp), tol=1e-9)


def evaluate_test_task(mdp, phi, sfs, w_new, tol=1e-8, start=0) -> dict:
    w_new = np.asarray(w_new, dtype=float)
    if w_new.shape != (phi.shape[1],):
        raise ConfigError(f"test task {w_new.tolist()} does not match {phi.shape[1]} features")
    task = with_task(mdp, phi, w_new)
    a, winner, _ = gpi_action(sfs, w_new, start)
    pi_gpi, _ = gpi_policy(sfs, w_new)
    v_gpi = float(mdplib.policy_evaluation_exact(task, pi_gpi)[start])
    v_opt = float(mdplib.solve_q_optimal(task)[start].max())
    library = [float(mdplib.policy_evaluation_exact(task, sf.policy)[start]) for sf in sfs]
    return {
        "w_new": w_new.tolist(),
        "gpi_policy": int(winner),
        "gpi_action": int(a),
        "gpi_value": v_gpi,
        "optimal_value": v_opt,
        "library_values": library,
        "max_library_value": max(library),
        "picks_library_argmax": int(winner) == int(np.argmax(library)),
        "suboptimal": v_gpi < v_opt - tol,
    }


def gpi_theorem_instance(rng, n_states=8, n_actions=3, n_features=3, n_policies=3, tol=1e-8):
    """True when exact GPI-policy Q dominates every library Q at every ``(s, a)``."""
    base = envs.random_mdp(n_states, n_actions, rng)
    phi = rng.normal(size=(n_states, n_features))
    train = rng.normal(size=(n_policies, n_features))
    sfs = []
    for i, w in enumerate(train):
        sfs.append(sf_closed_form(base, optimal_policy(with_task(base, phi, w)), phi, f"pi{i}"))
    w_new = rng.normal(size=n_policies) @ train  # inside the training span
    task = with_task(base, phi, w_new)
    pi_gpi, _ = gpi_policy(sfs, w_new)
    q_gpi = mdplib.q_evaluation_exact(task, pi_gpi)
    margin = min(float(np.min(q_gpi - mdplib.q_evaluation_exact(task, sf.policy))) for sf in sfs)
    return margin >= -tol, margin


def run_multitask(config: dict | None = None) -> dict:
    config = merge_defaults(config or {}, DEFAULTS)
    gamma = config["environment"]["gamma"]
    feats = config["environment"]["generator"]["outcome_features"]
    mdp, phi = two_step_world(feats, gamma)
    params = config["params"]
    sfs = [
        sf_closed_form(mdp, optimal_policy(with_task(mdp, phi, w)), phi, f"train{i}")
        for i, w in enumerate(params["train_tasks"])
    ]
    rows = [evaluate_test_task(mdp, phi, sfs, w, params["tol"]) for w in params["test_tasks"]]
    records = []
    for seed in config["seeds"]:
        rng = as_generator(seed)
        results = [gpi_theorem_instance(rng, tol=params["tol"]) for _ in range(params["random_worlds"])]
        records.append(
            {
                "seed": seed,
                "theorem_holds": [ok for ok, _ in results],
                "min_margin": min(m for _, m in results),
            }
        )
    train_rows = [
        r for r in rows if any(np.allclose(r["w_new"], w) for w in params["train_tasks"])
    ]
    checks = {
        "gpi_picks_library_argmax": all(r["picks_library_argmax"] for r in rows),
        "suboptimal_instance_exists": any(r["suboptimal"] for r in rows),
        "training_task_is_optimal": all(
            abs(r["gpi_value"] - r["optimal_value"]) <= params["tol"] for r in train_rows
        ),
        "gpi_theorem_random_worlds": all(all(r["theorem_holds"]) for r in records),
    }
    aggregate = {
        "test_tasks": rows,
        "theorem_fraction": float(np.mean([ok for r in records for ok in r["theorem_holds"]])),
        "feature_values": "reconstruction",
    }
    return make_report("multitask", config, records, aggregate, checks)
