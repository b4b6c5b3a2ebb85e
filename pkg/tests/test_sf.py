import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predrep import envs, sf, sr
from predrep import mdp as mdplib
from predrep.explore import uniform_sf
from predrep.gridworld import parse_gridworld
from predrep.mdp import MDPError

seeds = st.integers(0, 2**32 - 1)

# Two rooms split by a wall at column 2 with a door at row 2; A sits just past
# the door, B in the start room's corner.  Both end the episode.
TWO_GOALS = """
G.#...
..#...
......
..#...
..#...
..#...
"""


def _swap():
    mdp = envs.swap_chain(0.5, (0.0, 1.0))
    return mdp, mdplib.uniform_policy(mdp)


def _optimal(mdp, reward):
    return mdplib.greedy_policy(mdplib.solve_q_optimal(mdp.with_reward(reward)), tol=1e-9)


class TestFitTaskWeights:
    def test_onehot_recovers_reward(self):
        r = np.array([0.5, -1.0, 2.0])
        fit = sf.fit_task_weights(np.eye(3), [0, 1, 2], r)
        np.testing.assert_allclose(fit.w, r, atol=1e-7)

    def test_hand_solve(self):
        fit = sf.fit_task_weights([[1, 0], [1, 1]], [0, 1], [1, 3], ridge=0.0)
        np.testing.assert_allclose(fit.w, [1, 2], atol=1e-12)
        assert fit.residual == pytest.approx(0.0, abs=1e-20)

    def test_noisy_rewards(self):
        rng = np.random.default_rng(0)
        phi = rng.normal(size=(50, 3))
        w_true = np.array([1.0, -2.0, 0.5])
        states = rng.integers(0, 50, size=400)
        noise = 0.1
        r = phi[states] @ w_true + noise * rng.normal(size=400)
        fit = sf.fit_task_weights(phi, states, r)
        X = phi[states]
        se = noise * np.sqrt(np.diag(np.linalg.inv(X.T @ X)))
        assert fit.residual > 0
        assert np.all(np.abs(fit.w - w_true) <= 4 * se)

    def test_rank_deficient_without_ridge(self):
        with pytest.raises(MDPError):
            sf.fit_task_weights([[1, 1], [2, 2]], [0, 1], [1, 2], ridge=0.0)

    def test_length_mismatch(self):
        with pytest.raises(MDPError):
            sf.fit_task_weights(np.eye(2), [0, 1], [1.0])


class TestFeatureMap:
    def test_rejects_non_finite(self):
        with pytest.raises(MDPError):
            sf.FeatureMap([[np.nan]])

    def test_onehot(self):
        fm = sf.FeatureMap.onehot(3)
        assert fm.n_features == 3
        np.testing.assert_array_equal(np.asarray(fm), np.eye(3))


class TestClosedForm:
    def test_onehot_equals_action_sr(self, rng):
        mdp = envs.random_mdp(6, 3, rng)
        pi = envs.random_policy(mdp, rng)
        np.testing.assert_allclose(
            sf.sf_closed_form(mdp, pi, np.eye(6)).psi, sr.sr_action_closed_form(mdp, pi).m, atol=1e-12
        )

    def test_constant_feature(self, rng):
        mdp = envs.random_mdp(5, 2, rng, gamma=0.8)
        psi = sf.sf_closed_form(mdp, envs.random_policy(mdp, rng), np.ones((5, 1))).psi
        np.testing.assert_allclose(psi, 1 / (1 - 0.8), atol=1e-12)

    def test_swap_chain_rows(self):
        mdp, pi = _swap()
        psi = sf.sf_closed_form(mdp, pi, np.eye(2)).psi
        np.testing.assert_allclose(psi[0, 0], [2 / 3, 4 / 3])
        np.testing.assert_allclose(psi[1, 1], [4 / 3, 2 / 3])

    def test_feature_mismatch(self):
        mdp, pi = _swap()
        with pytest.raises(MDPError):
            sf.sf_closed_form(mdp, pi, np.eye(3))

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(1, 8), st.integers(1, 4))
    def test_onehot_equivalence_and_residual(self, seed, n, a):
        rng = np.random.default_rng(seed)
        mdp = envs.random_mdp(n, a, rng)
        pi = envs.random_policy(mdp, rng)
        psi = sf.sf_closed_form(mdp, pi, np.eye(n))
        np.testing.assert_allclose(psi.psi, sr.sr_action_closed_form(mdp, pi).m, atol=1e-8)
        phi = rng.normal(size=(n, 2))
        np.testing.assert_allclose(
            sf.sf_bellman_residual(mdp, pi, phi, sf.sf_closed_form(mdp, pi, phi)), 0.0, atol=1e-10
        )


class TestTD:
    def test_exact_sf_is_fixed_point(self):
        mdp, pi = _swap()
        psi = sf.sf_closed_form(mdp, pi, np.eye(2)).psi
        np.testing.assert_allclose(sf.sf_td_step(psi, 0, 1, 1, 0, np.eye(2), 0.5, 0.5), psi, atol=1e-15)

    def test_swap_chain_convergence(self):
        mdp, pi = _swap()
        psi = sf.learn_sf_td(mdp, pi, np.eye(2), 200_000, rng=0)
        np.testing.assert_allclose(psi, sf.sf_closed_form(mdp, pi, np.eye(2)).psi, atol=0.05)

    def test_myopic_limit(self):
        rng = np.random.default_rng(0)
        mdp = envs.random_mdp(5, 2, rng, gamma=0.0)
        phi = rng.normal(size=(5, 3))
        psi = sf.learn_sf_td(mdp, mdplib.uniform_policy(mdp), phi, 100_000, rng=1, eta0=1.0, tau=1.0, per_visit=True)
        np.testing.assert_allclose(psi, mdp.transition @ phi, atol=0.05)

    def test_compiled_matches_python(self, rng):
        mdp = envs.linear_chain(5, 0.9)
        pi = mdplib.uniform_policy(mdp)
        phi = rng.normal(size=(5, 2))
        a = sf.learn_sf_td(mdp, pi, phi, 2000, rng=2)
        b = sf.learn_sf_td(mdp, pi, phi, 2000, rng=2, backend="python")
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestQFromSF:
    def test_zero_task(self):
        mdp, pi = _swap()
        np.testing.assert_array_equal(sf.q_from_sf(sf.sf_closed_form(mdp, pi, np.eye(2)), [0, 0]), 0.0)

    def test_swap_chain_matches_sr(self):
        mdp, pi = _swap()
        np.testing.assert_allclose(
            sf.q_from_sf(sf.sf_closed_form(mdp, pi, np.eye(2)), [0, 1]),
            sr.value_from_sr(sr.sr_action_closed_form(mdp, pi), [0, 1]),
        )

    def test_dimension_mismatch(self):
        mdp, pi = _swap()
        with pytest.raises(MDPError):
            sf.q_from_sf(sf.sf_closed_form(mdp, pi, np.eye(2)), [1.0])

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, alpha, beta):
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=(4, 2, 3))
        w1, w2 = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_allclose(
            sf.q_from_sf(psi, alpha * w1 + beta * w2),
            alpha * sf.q_from_sf(psi, w1) + beta * sf.q_from_sf(psi, w2),
            atol=1e-10,
        )

    def test_positive_scaling_keeps_argmax(self, rng):
        psi = rng.normal(size=(6, 3, 2))
        w = rng.normal(size=2)
        np.testing.assert_array_equal(
            sf.q_from_sf(psi, 7.5 * w).argmax(1), sf.q_from_sf(psi, w).argmax(1)
        )


class TestGPI:
    def test_single_policy_is_greedy(self, rng):
        mdp = envs.random_mdp(6, 3, rng)
        phi = rng.normal(size=(6, 2))
        psi = sf.sf_closed_form(mdp, envs.random_policy(mdp, rng), phi)
        w = rng.normal(size=2)
        for s in range(6):
            a, i, q = sf.gpi_action([psi], w, s)
            assert i == 0 and a == int(np.argmax(sf.q_from_sf(psi, w)[s]))

    def test_specialists_pick_higher_dot_product(self):
        mdp, phi = _two_step_kitchen()
        w_milk, w_bread = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
        fridge = sf.sf_closed_form(mdp, _optimal(mdp, phi @ w_milk), phi, "fridge")
        pantry = sf.sf_closed_form(mdp, _optimal(mdp, phi @ w_bread), phi, "pantry")
        # "get milk" reuses the fridge policy and heads to the fridge
        assert sf.gpi_action([fridge, pantry], w_milk, 0)[:2] == (0, 0)
        assert sf.gpi_action([fridge, pantry], [1.0, 0.5, 0.0], 0)[0] == 0
        assert sf.gpi_action([fridge, pantry], [0.2, 1.0, 0.0], 0)[0] == 1
        for s in range(mdp.n_states):
            q = np.stack([sf.q_from_sf(p, np.ones(3))[s] for p in (fridge, pantry)])
            assert sf.gpi_action([fridge, pantry], np.ones(3), s)[1] == int(np.argmax(q.max(1)))

    def test_gpi_dominates_library(self):
        rng = np.random.default_rng(11)
        mdp = envs.random_mdp(6, 3, rng)
        phi = rng.normal(size=(6, 3))
        train = rng.normal(size=(3, 3))
        library = [sf.sf_closed_form(mdp, _optimal(mdp, phi @ w), phi) for w in train]
        w_new = np.array([0.3, -1.2, 0.8]) @ train
        task = mdp.with_reward(phi @ w_new)
        pi_gpi, _ = sf.gpi_policy(library, w_new)
        q_gpi = mdplib.q_evaluation_exact(task, pi_gpi)
        for psi in library:
            assert np.all(q_gpi >= mdplib.q_evaluation_exact(task, psi.policy) - 1e-8)

    def test_empty_library(self):
        with pytest.raises(MDPError):
            sf.gpi_action([], [1.0], 0)

    def test_check_span(self):
        assert sf.check_span([2.0, 2.0, 0.0], [[1, 1, 0], [0, 0, 1]])
        with pytest.warns(UserWarning):
            assert not sf.check_span([1.0, 0.0, 0.0], [[1, 1, 0], [0, 0, 1]])


def _two_step_kitchen():
    """Start state 0 chooses the fridge (state 1) or the pantry (state 2); each ends in
    a terminal outcome: fridge holds milk [1, 0, 0.1], pantry bread [0, 1, 0.1]."""
    T = np.zeros((5, 2, 5))
    T[0, 0, 1] = T[0, 1, 2] = 1.0
    T[1, :, 3] = T[2, :, 4] = 1.0
    T[3, :, 3] = T[4, :, 4] = 1.0
    phi = np.zeros((5, 3))
    phi[3], phi[4] = [1.0, 0.0, 0.1], [0.0, 1.0, 0.1]
    mdp = mdplib.TabularMDP(0.9, T, np.zeros(5), [False, False, False, True, True])
    return mdp, phi


class TestOptionKeyboard:
    def test_constant_preference_reduces_to_gpi(self, rng):
        mdp = envs.random_mdp(6, 3, rng)
        phi = rng.normal(size=(6, 2))
        lib = [sf.sf_closed_form(mdp, envs.random_policy(mdp, rng), phi) for _ in range(3)]
        w = rng.normal(size=2)
        for s in range(6):
            assert sf.option_keyboard_action(lib, sf.constant_preference, s, w) == sf.gpi_action(lib, w, s)

    def test_zero_preference_ties_to_first(self, rng):
        mdp = envs.random_mdp(4, 3, rng)
        phi = rng.normal(size=(4, 2))
        lib = [sf.sf_closed_form(mdp, envs.random_policy(mdp, rng), phi) for _ in range(2)]
        a, i, q = sf.option_keyboard_action(lib, lambda s, w: np.zeros(2), 2, np.ones(2))
        assert (a, i, q) == (0, 0, 0.0)

    def test_two_rooms_avoid_then_approach(self):
        grid = parse_gridworld(TWO_GOALS)
        a_goal, b_goal = grid.state_at(2, 3), grid.state_at(0, 0)
        mdp = _with_goals(grid, [a_goal, b_goal])
        phi = np.zeros((grid.n_states, 2))
        phi[a_goal, 0], phi[b_goal, 1] = 1.0, 1.0
        lib = [sf.sf_closed_form(mdp, _optimal(mdp, phi[:, k]), phi) for k in range(2)]
        left_room = np.array([grid.coords(s)[1] < 2 for s in range(grid.n_states)])
        g = sf.region_preference(left_room, [1.0, -1.0])
        w = np.ones(2)
        start = grid.state_at(1, 1)

        def run(pref):
            s, used = start, []
            for _ in range(20):
                a, i, _ = sf.option_keyboard_action(lib, pref, s, w)
                used.append(i)
                s = grid.neighbor(s, a)
                if s in (a_goal, b_goal):
                    return s, used
            return s, used

        end_gpi, used_gpi = run(sf.constant_preference)
        end_ok, used_ok = run(g)
        # plain GPI goes for the nearby B; flipping B's sign in the start room routes to A
        assert end_gpi == b_goal and used_gpi[0] == 1
        assert end_ok == a_goal and used_ok[0] == 0


def _with_goals(grid, goals):
    mdp = grid.to_mdp(0.9, reward=np.zeros(grid.n_states))
    T = np.array(mdp.transition)
    term = np.zeros(grid.n_states, dtype=bool)
    for gs in goals:
        T[gs] = 0.0
        T[gs, :, gs] = 1.0
        term[gs] = True
    return mdplib.TabularMDP(0.9, T, np.zeros(grid.n_states), term)


class TestSimilarity:
    def test_swap_chain(self):
        mdp, pi = _swap()
        psi = sf.sf_closed_form(mdp, pi, np.eye(2))
        assert sf.sf_similarity(psi, 0, 0) == pytest.approx(20 / 9)
        assert sf.sf_similarity(psi, 0, 1) == pytest.approx(16 / 9)

    def test_self_similarity_is_squared_norm(self, rng):
        mdp = envs.random_mdp(5, 2, rng)
        psi = uniform_sf(mdp)
        bar = sf.mean_sf(psi)
        for s in range(5):
            assert sf.sf_similarity(psi, s, s) == pytest.approx(bar[s] @ bar[s])

    def test_two_rooms_within_exceeds_across(self):
        grid = envs.two_rooms()
        S = sf.sf_similarity_matrix(uniform_sf(grid.to_mdp(0.9)))
        left = np.array([grid.coords(s)[1] < 2 for s in range(grid.n_states)])
        right = np.array([grid.coords(s)[1] > 2 for s in range(grid.n_states)])
        within = np.mean([S[np.ix_(left, left)].mean(), S[np.ix_(right, right)].mean()])
        across = S[np.ix_(left, right)].mean()
        assert within > across

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_gram_is_psd(self, seed):
        rng = np.random.default_rng(seed)
        mdp = envs.random_mdp(8, 3, rng)
        S = sf.sf_similarity_matrix(uniform_sf(mdp))
        idx = rng.choice(8, size=5, replace=False)
        np.testing.assert_allclose(S, S.T, atol=1e-12)
        assert np.linalg.eigvalsh(S[np.ix_(idx, idx)]).min() >= -1e-8
