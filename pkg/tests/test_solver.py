import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapirl.core import DemonstrationSet, DomainError, FeatureMaps, NumericalError, QParams, Trajectory, log_likelihood
from mapirl.envs import gridworld as gw
from mapirl.evaluate import value_iteration
from mapirl.objectives import compile_steps, lpo_objective, lrp_objective
from mapirl.solver import SolverConfig, _whitening, fit_lpo, fit_lrp, greedy_policy, maximize

from conftest import one_hot_maps, random_instance
from test_lstdq import bellman_q


def quadratic(c):
    return lambda x: (-np.sum((x - c) ** 2), -2 * (x - c))


def noisy_demos(rng, n_states=4, n_actions=3, per_state=200):
    """Every state visited often with every action, so no direction is separable."""
    trajectories = []
    for s in range(n_states):
        actions = rng.integers(0, n_actions, size=per_state)
        trajectories.append(Trajectory((s,) * per_state, tuple(actions)))
    return DemonstrationSet(tuple(trajectories))


class TestMaximize:
    def test_quadratic(self):
        c = np.array([1.5, -2.0, 0.25])
        res = maximize(quadratic(c), SolverConfig(gradient_tolerance=1e-10), np.zeros(3))
        assert res.converged
        np.testing.assert_allclose(res.params, c, atol=1e-8)

    def test_starting_at_the_maximum(self):
        c = np.array([0.5, 0.5])
        res = maximize(quadratic(c), SolverConfig(), c.copy())
        assert res.converged and res.iterations <= 1

    @given(st.integers(0, 2**32 - 1))
    def test_invariant_to_constant_shifts(self, seed):
        rng = np.random.default_rng(seed)
        c = rng.normal(size=4)
        f = quadratic(c)
        a = maximize(f, SolverConfig(gradient_tolerance=1e-10), np.zeros(4))
        b = maximize(lambda x: (f(x)[0] + 7.0, f(x)[1]), SolverConfig(gradient_tolerance=1e-10), np.zeros(4))
        np.testing.assert_allclose(a.params, b.params, atol=1e-8)

    def test_objective_never_decreases(self, rng):
        maps, D = random_instance(rng, n_states=6, n_actions=4, n_traj=6, max_len=10)
        values = []
        fun = lambda w: lpo_objective(w, D, maps)  # noqa: E731
        maximize(fun, SolverConfig(), np.zeros(maps.m_Q), callback=lambda x, f: values.append(f))
        assert len(values) > 2
        assert all(b >= a - 1e-12 * (1 + abs(a)) for a, b in zip(values, values[1:]))

    def test_iteration_cap_reported(self, rng):
        maps, D = random_instance(rng)
        res = maximize(lambda w: lpo_objective(w, D, maps), SolverConfig(max_iterations=2), np.zeros(maps.m_Q))
        assert res.iterations == 2 and not res.converged

    def test_converged_implies_small_gradient(self, rng):
        maps, _ = random_instance(rng)
        D = noisy_demos(rng, n_states=4, n_actions=3)
        _, res = fit_lpo(D, maps)
        assert res.converged and res.gradient_norm < 1e-6

    def test_non_finite_objective(self):
        with pytest.raises(NumericalError):
            maximize(lambda x: (np.nan, np.zeros(1)), SolverConfig(), np.zeros(1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(gradient_tolerance=0.0)
        with pytest.raises(ValueError):
            SolverConfig(max_iterations=0)
        with pytest.raises(ValueError):
            SolverConfig(init="ones").initial_point(3)


class TestFitLpo:
    def test_two_starts_agree(self, rng):
        maps, _ = random_instance(rng, n_states=4, n_actions=3)
        D = noisy_demos(rng)
        a_w, a = fit_lpo(D, maps, config=SolverConfig(init=rng.normal(size=maps.m_Q)))
        b_w, b = fit_lpo(D, maps, config=SolverConfig(init=rng.normal(size=maps.m_Q)))
        assert a.converged and b.converged
        assert abs(a.objective - b.objective) < 1e-6
        np.testing.assert_array_equal(greedy_policy(a_w, maps).probs, greedy_policy(b_w, maps).probs)

    def test_dominates_the_generating_policy(self):
        rng = np.random.default_rng(7)
        maps = one_hot_maps(3, 2)
        expert = QParams(rng.normal(size=6), beta=1.0)
        probs = np.exp(maps.q_table @ expert.w_Q)
        probs /= probs.sum(axis=1, keepdims=True)
        states = rng.integers(0, 3, size=300)
        actions = [int(rng.random() < probs[s, 1]) for s in states]
        D = DemonstrationSet((Trajectory(tuple(states), tuple(actions)),))
        fitted, _ = fit_lpo(D, maps)
        assert log_likelihood(D, fitted, maps) >= log_likelihood(D, expert, maps)

    def test_separable_single_step(self):
        eye = np.eye(2).reshape(1, 2, 2)
        maps = FeatureMaps(eye, eye)
        D = DemonstrationSet((Trajectory((0,), (1,)),))
        w, res = fit_lpo(D, maps)
        z = maps.q_table[0] @ w.w_Q
        p = np.exp(z - z.max())
        assert p[1] / p.sum() > 0.99
        assert not res.converged and "separable" in res.message

    def test_uniform_demonstrations_give_a_near_uniform_policy(self, rng):
        maps = one_hot_maps(4, 3)
        D = noisy_demos(rng, per_state=3000)
        w, _ = fit_lpo(D, maps)
        z = maps.q_table @ w.w_Q
        p = np.exp(z - z.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        assert (0.5 * np.abs(p - 1 / 3).sum(axis=1)).max() < 0.05

    def test_beta_rescales_the_weights(self, rng):
        maps, _ = random_instance(rng)
        D = noisy_demos(rng)
        w1, _ = fit_lpo(D, maps, beta=1.0, config=SolverConfig(gradient_tolerance=1e-9))
        w2, _ = fit_lpo(D, maps, beta=2.0, config=SolverConfig(gradient_tolerance=1e-9))
        np.testing.assert_allclose(w1.w_Q, 2 * w2.w_Q, rtol=1e-4, atol=1e-6)
        np.testing.assert_array_equal(greedy_policy(w1, maps).probs, greedy_policy(w2, maps).probs)

    def test_penalty_keeps_separable_fits_bounded(self):
        eye = np.eye(2).reshape(1, 2, 2)
        maps = FeatureMaps(eye, eye)
        D = DemonstrationSet((Trajectory((0,), (1,)),))
        w, res = fit_lpo(D, maps, config=SolverConfig(penalty=0.1))
        assert res.converged and np.abs(w.w_Q).max() < 10

    def test_empty_set(self, rng):
        maps, _ = random_instance(rng)
        with pytest.raises(ValueError):
            fit_lpo(DemonstrationSet(), maps)


class TestFitLrp:
    def test_value_weights_are_computed(self, rng):
        maps, D = random_instance(rng, n_traj=5, max_len=8)
        out = fit_lrp(D + noisy_demos(rng), maps, 0.9, ridge=1e-3)
        np.testing.assert_array_equal(out.w_Q.w_Q, out.C @ out.w_R.w_R)

    def test_only_length_one_trajectories(self, rng):
        maps, _ = random_instance(rng)
        D = DemonstrationSet((Trajectory((0,), (0,)), Trajectory((1,), (2,))))
        with pytest.raises(DomainError):
            fit_lrp(D, maps, 0.9)

    def test_separable_data_is_not_converged(self):
        eye = np.eye(2).reshape(1, 2, 2)
        maps = FeatureMaps(eye, eye)
        D = DemonstrationSet((Trajectory((0,), (1,)),))
        out = fit_lrp(D, maps, 0.9, C=np.eye(2))
        assert not out.result.converged and "separable" in out.result.message
        assert fit_lrp(D, maps, 0.9, C=np.eye(2), config=SolverConfig(penalty=0.1)).result.converged

    def test_identity_map_reduces_to_lpo(self, rng):
        q = rng.normal(size=(4, 3, 5))
        maps = FeatureMaps(q, q)
        D = noisy_demos(rng)
        cfg = SolverConfig(gradient_tolerance=1e-9)
        lpo, _ = fit_lpo(D, maps, config=cfg)
        lrp = fit_lrp(D, maps, 0.9, C=np.eye(5), config=cfg)
        np.testing.assert_allclose(lrp.w_R.w_R, lpo.w_Q, atol=1e-6)

    def test_whitening_is_an_exact_change_of_variables(self, rng):
        B = rng.normal(size=(6, 4))
        H = B @ B.T  # rank 4
        T, T_inv_t = _whitening(H)
        np.testing.assert_allclose(T_inv_t.T @ T, np.eye(6), atol=1e-12)
        np.testing.assert_allclose(np.sort(np.diag(T.T @ H @ T)), [0, 0, 1, 1, 1, 1], atol=1e-8)

    def test_flat_directions_do_not_stall_the_fit(self, rng):
        # a duplicated column and a column constant across actions leave
        # the likelihood flat along directions that C mixes into w_R
        base = rng.normal(size=(4, 3, 3))
        q = np.concatenate([base, base[:, :, :1], np.repeat(rng.normal(size=(4, 1, 1)), 3, axis=1)], axis=2)
        maps = FeatureMaps(rng.normal(size=(4, 3, 4)), q)
        D = noisy_demos(rng, per_state=100)
        C = rng.normal(size=(5, 4))
        out = fit_lrp(D, maps, 0.9, C=C)
        assert out.result.converged
        batch = compile_steps(D, maps)
        plain = maximize(lambda w: lrp_objective(w, batch, C, 1.0, maps), SolverConfig(max_iterations=5000), np.zeros(4))
        assert out.result.objective >= plain.objective - 1e-8
        grad = lrp_objective(out.w_R, batch, C, 1.0, maps).gradient
        assert np.abs(grad).max() == pytest.approx(out.result.gradient_norm, rel=1e-6, abs=1e-12)

    def test_gridworld_value_weights_match_bellman_solve(self):
        model = gw.build_gridworld(8)
        expert = value_iteration(model).policy.probs
        P = model.dense_transition()
        trajectories = []
        for s in range(64):
            for a in range(5):
                for s2 in np.flatnonzero(P[s, a]):
                    a2 = int(np.argmax(expert[s2]))
                    trajectories += [Trajectory((s, int(s2)), (a, a2))] * round(50 * P[s, a, s2])
        D = DemonstrationSet(tuple(trajectories))
        maps = one_hot_maps(64, 5)
        out = fit_lrp(D, maps, model.discount)
        reward = out.w_R.w_R.reshape(64, 5)
        q = bellman_q(model, expert, reward)
        assert np.abs(out.w_Q.w_Q - q).max() < 1e-2


class TestGreedy:
    def test_zero_weights_pick_the_first_action(self, rng):
        maps, _ = random_instance(rng)
        assert np.all(greedy_policy(np.zeros(maps.m_Q), maps).probs[:, 0] == 1.0)

    def test_dominant_block(self):
        maps = one_hot_maps(3, 2)
        w = np.tile([0.0, 1.0], 3)
        assert np.all(greedy_policy(w, maps).probs[:, 1] == 1.0)

    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        maps, _ = random_instance(rng, n_states=5, n_actions=4)
        w = rng.normal(size=maps.m_Q)
        pi = greedy_policy(w, maps)
        for s in range(5):
            values = [sum(maps.q_table[s, a, i] * w[i] for i in range(maps.m_Q)) for a in range(4)]
            assert pi.probs[s, values.index(max(values))] == 1.0

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
    def test_invariant_to_positive_scaling(self, seed, beta):
        rng = np.random.default_rng(seed)
        maps, _ = random_instance(rng)
        w = rng.normal(size=maps.m_Q)
        np.testing.assert_array_equal(greedy_policy(w, maps).probs, greedy_policy(beta * w, maps).probs)

    def test_respects_legal_actions(self):
        q = np.array([[[5.0], [1.0]]])
        maps = FeatureMaps(q, q, legal=np.array([[False, True]]))
        assert greedy_policy(np.ones(1), maps).probs[0, 1] == 1.0
