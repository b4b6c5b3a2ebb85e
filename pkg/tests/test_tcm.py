import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predrep import envs, sr, tcm
from predrep import mdp as mdplib

seeds = st.integers(0, 2**32 - 1)


class TestContextUpdate:
    def test_full_drift_replaces(self):
        np.testing.assert_array_equal(tcm.context_update([0.3, 0.7], [0.0, 1.0], 1.0), [0.0, 1.0])

    def test_zero_drift_freezes(self):
        np.testing.assert_array_equal(tcm.context_update([0.3, 0.7], [1.0, 0.0], 0.0), [0.3, 0.7])

    def test_half_drift(self):
        np.testing.assert_allclose(tcm.context_update([1.0, 0.0], [0.0, 1.0], 0.5), [0.5, 0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            tcm.context_update([1.0, 0.0], [0.0, 1.0, 0.0], 0.5)

    def test_omega_out_of_range(self):
        with pytest.raises(ValueError):
            tcm.context_update([1.0, 0.0], [0.0, 1.0], 1.5)

    @given(seeds, st.floats(0.0, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_one_hot_stream_stays_on_simplex(self, seed, omega):
        rng = np.random.default_rng(seed)
        c = tcm.onehot(0, 5)
        for s in rng.integers(5, size=30):
            c = tcm.context_update(c, tcm.onehot(int(s), 5), omega)
            assert np.all(c >= 0)
            np.testing.assert_allclose(c.sum(), 1.0)


class TestHebbian:
    def test_zero_context_no_change(self):
        m = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(tcm.tcm_hebbian_update(m, tcm.onehot(1, 3), np.zeros(3), 0.5), m)

    def test_single_cell(self):
        m = tcm.tcm_hebbian_update(np.zeros((3, 3)), tcm.onehot(2, 3), tcm.onehot(0, 3), 0.5)
        expected = np.zeros((3, 3))
        expected[0, 2] = 0.5
        np.testing.assert_array_equal(m, expected)

    def test_repeated_list_grows_linearly(self):
        n, m = 4, np.zeros((4, 4))
        strength = []
        for _ in range(5):
            for s in range(n - 1):
                m = tcm.tcm_hebbian_update(m, tcm.onehot(s + 1, n), tcm.onehot(s, n), 0.1)
            strength.append(m[0, 1])
        np.testing.assert_allclose(np.diff(strength), 0.1)


class TestTDUpdate:
    def test_exact_sr_is_fixed_point(self, rng):
        mdp = envs.swap_chain(0.5)
        m = sr.sr_closed_form(mdp, mdplib.uniform_policy(mdp)).m
        c = rng.random(2)
        np.testing.assert_allclose(tcm.tcm_td_update(m, 0, 1, c, 0.3, 0.5), m, atol=1e-15)

    def test_matches_sr_td_step_bitwise(self, rng):
        mdp = envs.random_mdp(6, 2, rng)
        pi = mdplib.uniform_policy(mdp)
        traj = mdplib.sample_trajectory(mdp, pi, 0, 300, rng)
        m_tcm = np.zeros((6, 6))
        m_sr = np.zeros((6, 6))
        m_row = np.zeros((6, 6))
        trace = None
        for s, _, _, s2 in traj.steps:
            m_tcm = tcm.tcm_td_update(m_tcm, s, s2, tcm.onehot(s, 6), 0.2, mdp.gamma)
            m_sr, trace = sr.sr_td_step(m_sr, s, s2, 0.2, mdp.gamma, 1.0, trace)
            m_row = sr.sr_row_update(m_row, s, s2, 0.2, mdp.gamma)
        np.testing.assert_array_equal(m_tcm, m_sr)
        np.testing.assert_array_equal(m_tcm, m_row)

    def test_terminal_drops_bootstrap(self):
        m = np.ones((2, 2))
        out = tcm.tcm_td_update(m, 0, 1, tcm.onehot(0, 2), 1.0, 0.9, terminal=True)
        np.testing.assert_allclose(out[0], [0.0, 1.0])

    def test_context_repetition_strengthens_predicted_item(self):
        # Study A -> B, then present Z -> A: B itself never reappears.
        A, B, Z, n = 0, 1, 2, 3
        gamma, rate = 0.8, 0.5
        m_td = tcm.tcm_td_update(np.zeros((n, n)), A, B, tcm.onehot(A, n), rate, gamma)
        m_hebb = tcm.tcm_hebbian_update(np.zeros((n, n)), tcm.onehot(B, n), tcm.onehot(A, n), rate)
        before_td, before_hebb = m_td[:, B].sum(), m_hebb[:, B].sum()
        m_td = tcm.tcm_td_update(m_td, Z, A, tcm.onehot(Z, n), rate, gamma)
        m_hebb = tcm.tcm_hebbian_update(m_hebb, tcm.onehot(A, n), tcm.onehot(Z, n), rate)
        assert m_td[:, B].sum() > before_td
        np.testing.assert_allclose(m_td[Z, B], rate * gamma * rate)
        assert m_hebb[:, B].sum() == before_hebb

    def test_salience_overweights_rewarded_state(self, rng):
        mdp = envs.ring(6, 0.9)
        pi = mdplib.uniform_policy(mdp)
        traj = mdplib.sample_trajectory(mdp, pi, 0, 400, rng)
        reward = tcm.onehot(3, 6)
        salience = np.ones(6)
        salience[3] = 3.0
        plain, salient = np.zeros((6, 6)), np.zeros((6, 6))
        for s, _, _, s2 in traj.steps:
            c = tcm.onehot(s, 6)
            plain = tcm.tcm_td_update(plain, s, s2, c, 0.05, mdp.gamma)
            salient = tcm.tcm_td_update(salient, s, s2, c, 0.05, mdp.gamma, salience=salience)
        assert np.all(salient @ reward > plain @ reward)

    def test_hebbian_diverges_td_converges_on_ring(self):
        n, gamma, rate = 5, 0.9, 0.5
        hebb, td = np.zeros((n, n)), np.zeros((n, n))
        hebb_laps, td_laps = [], []
        for _ in range(300):
            for s in range(n):
                s2, c = (s + 1) % n, tcm.onehot(s, n)
                hebb = tcm.tcm_hebbian_update(hebb, tcm.onehot(s2, n), c, rate)
                td = tcm.tcm_td_update(td, s, s2, c, rate, gamma)
            hebb_laps.append(hebb.copy())
            td_laps.append(td.copy())
        assert np.abs(hebb_laps[-1]).max() > 100.0
        assert np.abs(hebb_laps[-1] - hebb_laps[-2]).max() == pytest.approx(rate)
        assert np.abs(td_laps[-1] - td_laps[-2]).max() < 1e-7
        exact = sr.sr_closed_form(envs.ring(n, gamma), envs.directional_policy(n, 1.0)).m
        np.testing.assert_allclose(td, exact, atol=1e-6)


class TestSREvaluate:
    def test_swap_chain_zero_drift(self):
        mdp = envs.swap_chain(0.5)
        m = sr.sr_closed_form(mdp, mdplib.uniform_policy(mdp)).m
        est = tcm.tcm_sr_evaluate(m, [0.0, 1.0], 0, 0.0, 0.5, 20_000, rng=1)
        assert abs(est.value - 4 / 3) <= 3 * est.se
        assert est.n_clamped == 0 and not est.fallback

    def test_full_drift_rollout_matches_monte_carlo(self, rng):
        mdp = envs.random_mdp(5, 2, rng, gamma=0.8)
        pi = mdplib.uniform_policy(mdp)
        T = mdplib.policy_transition_matrix(mdp, pi)
        est = tcm.tcm_sr_evaluate(T, mdp.reward, 0, 1.0, mdp.gamma, 5_000, depth=20, rng=2)
        mc, mc_se = mdplib.monte_carlo_evaluation(mdp, pi, 0, 5_000, horizon=20, rng=3)
        assert abs(est.value - mc) <= 3 * np.hypot(est.se, mc_se)

    def test_single_sample_deterministic_chain(self):
        mdp = envs.ring(4, 0.9)
        pi = envs.directional_policy(4, 1.0)
        T = mdplib.policy_transition_matrix(mdp, pi)
        reward = np.array([0.0, 1.0, 0.0, 2.0])
        est = tcm.tcm_sr_evaluate(T, reward, 0, 1.0, 0.9, 1, depth=6, rng=0)
        expected = sum(0.9**t * reward[(t + 1) % 4] for t in range(6))
        np.testing.assert_allclose(est.value, expected)
        assert est.se == 0.0

    def test_zero_drift_unbiased_over_random_mdps(self):
        rng = np.random.default_rng(7)
        misses = 0
        for _ in range(50):
            mdp = envs.random_mdp(6, 2, rng)
            m = sr.sr_closed_form(mdp, envs.random_policy(mdp, rng)).m
            est = tcm.tcm_sr_evaluate(m, mdp.reward, 0, 0.0, mdp.gamma, 2_000, rng=rng)
            misses += abs(est.value - m[0] @ mdp.reward) > 3 * est.se
        assert misses == 0

    def test_negative_weights_clamped(self):
        m = np.array([[1.0, -0.5], [0.5, 0.5]])
        est = tcm.tcm_sr_evaluate(m, [1.0, 1.0], 0, 0.0, 0.5, 10, rng=0)
        assert est.n_clamped == 10
        np.testing.assert_allclose(est.samples, 1.0)

    def test_zero_row_falls_back_to_uniform(self):
        est = tcm.tcm_sr_evaluate(np.zeros((3, 3)), [1.0, 2.0, 3.0], 0, 0.0, 0.5, 5, rng=0)
        assert est.fallback
        np.testing.assert_allclose(est.value, 0.0)

    def test_invalid_sample_count(self):
        with pytest.raises(ValueError):
            tcm.tcm_sr_evaluate(np.eye(2), [0.0, 1.0], 0, 0.0, 0.5, 0)

    def test_custom_start_context(self):
        m = np.array([[0.0, 2.0], [2.0, 0.0]])
        est = tcm.tcm_sr_evaluate(m, [0.0, 1.0], 0, 0.0, 0.5, 50, rng=0, c0=[0.0, 1.0])
        np.testing.assert_allclose(est.value, 0.0)

    @given(seeds, st.floats(0.05, 0.95))
    @settings(max_examples=20, deadline=None)
    def test_intermediate_drift_bounded_and_seeded(self, seed, omega):
        rng = np.random.default_rng(seed)
        mdp = envs.random_mdp(5, 2, rng)
        m = sr.sr_closed_form(mdp, mdplib.uniform_policy(mdp)).m
        a = tcm.tcm_sr_evaluate(m, mdp.reward, 1, omega, mdp.gamma, 50, depth=8, rng=seed)
        b = tcm.tcm_sr_evaluate(m, mdp.reward, 1, omega, mdp.gamma, 50, depth=8, rng=seed)
        np.testing.assert_array_equal(a.samples, b.samples)
        weights = omega * mdp.gamma ** np.arange(8) + (1 - omega) / 8
        bound = weights.sum() * np.abs(m).sum(axis=1).max() * np.abs(mdp.reward).max()
        assert np.all(np.abs(a.samples) <= bound + 1e-12)
