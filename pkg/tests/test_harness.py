import dataclasses
import math

import numpy as np
import pytest

from mapirl.envs import blackjack as bj
from mapirl.envs import gridworld as gw
from mapirl.harness import (
    CSV_HEADER,
    ExperimentConfig,
    build_expert,
    cell_seed,
    fit,
    generate_demos,
    improved_policy,
    make_env,
    read_results,
    run_cell,
    sweep,
    write_results,
)
from mapirl.solver import SolverConfig

from test_evaluate import lp_optimal_values


def strip_timing(path):
    rows = read_results(path)
    for r in rows:
        r.pop("fit_cpu_ms")
    return rows


class TestExperts:
    @pytest.mark.parametrize("dealer", range(1, 11))
    def test_blackjack_sticks_on_soft_21(self, dealer):
        pi = build_expert(make_env("blackjack"))
        assert pi.probs[bj.encode(21, dealer, 1), bj.STICK] == 1.0

    def test_gridworld_expert_is_greedy_on_oracle_values(self):
        env = make_env("gridworld")
        model = env.demo_model
        V = lp_optimal_values(model)
        Q = model.true_reward + model.discount * np.einsum("sat,t->sa", model.dense_transition(), V)
        pi = build_expert(env)
        still = gw.ACTIONS.index("still")
        for s in range(model.state_count):
            chosen = int(np.argmax(pi.probs[s]))
            assert Q[s, chosen] >= Q[s].max() - 1e-6
            inside = model.true_reward[s, 0] > 0
            if inside and Q[s, still] > np.delete(Q[s], still).max() + 1e-6:
                assert chosen == still

    def test_tictactoe_takes_the_only_winning_move(self):
        env = make_env("tictactoe-random-opp")
        pi = build_expert(env)
        g = env.game.index[(1, 1, 0, -1, -1, 0, 1, -1, 0)]
        s = int(env.demo_model.info["game_to_mdp"][g])
        assert pi.probs[s, 2] == 1.0


class TestDemonstrations:
    def test_episode_count(self):
        env = make_env("blackjack")
        D = generate_demos(env.demo_model, build_expert(env), 10, None, seed=1)
        assert len(D) == 10

    def test_blackjack_episodes_end_at_the_terminal(self):
        env = make_env("blackjack")
        D = generate_demos(env.demo_model, build_expert(env), 50, None, seed=2)
        for t in D:
            assert t.terminal_included and t.states[-1] == bj.TERMINAL
            assert all(s != bj.TERMINAL for s in t.states[:-1])

    def test_gridworld_horizon(self):
        env = make_env("gridworld", side=8)
        D = generate_demos(env.demo_model, build_expert(env), 30, env.horizon, seed=3)
        assert all(len(t) == 8 and not t.terminal_included for t in D)

    def test_same_seed_same_data(self):
        env = make_env("tictactoe-random-opp")
        a = generate_demos(env.demo_model, build_expert(env), 20, None, seed=4)
        b = generate_demos(env.demo_model, build_expert(env), 20, None, seed=4)
        assert a == b

    def test_demonstrated_actions_are_legal(self):
        env = make_env("tictactoe-optimal-opp")
        D = generate_demos(env.demo_model, build_expert(env), 40, None, seed=5)
        for t in D:
            for s, a in t.decision_steps():
                assert env.demo_model.legal[s, a]

    def test_needs_an_episode(self):
        env = make_env("blackjack")
        with pytest.raises(ValueError):
            generate_demos(env.demo_model, build_expert(env), 0, None, seed=0)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(env="chess")
        with pytest.raises(ValueError):
            ExperimentConfig(episodes=(100, 10))
        with pytest.raises(ValueError):
            ExperimentConfig(runs=0)
        with pytest.raises(ValueError):
            ExperimentConfig(extraction="rollout")

    def test_seeds_do_not_depend_on_the_algorithm(self):
        assert cell_seed(0, 100, 3) == cell_seed(0, 100, 3) != cell_seed(0, 100, 4)


class TestCells:
    def test_large_gridworld_cell(self):
        row = run_cell(ExperimentConfig(env="gridworld", algo="lpo", episodes=(10_000,), runs=1), 10_000, 0)
        assert math.isfinite(row.loss) and isinstance(row.converged, bool)

    def test_both_extractions_for_lrp(self):
        env = make_env("blackjack")
        D = generate_demos(env.demo_model, build_expert(env), 200, None, seed=6)
        doc = fit(env, D, "lrp", 1.0, 1.0, None, SolverConfig())
        for extraction in ("q-greedy", "reward-vi"):
            pi = improved_policy(env, "lrp", doc, extraction)
            assert pi.is_deterministic and pi.probs.shape == (201, 2)
        np.testing.assert_array_equal(improved_policy(env, "lpo", doc).probs, improved_policy(env, "lrp", doc).probs)

    def test_cell_alone_matches_the_sweep(self, tmp_path):
        config = ExperimentConfig(env="blackjack", algo="lrp", episodes=(10, 30), runs=2, out=str(tmp_path / "a.csv"))
        rows = sweep(config)
        alone = run_cell(config, 30, 1)
        assert dataclasses.replace(alone, fit_cpu_ms=0) == dataclasses.replace(rows[3], fit_cpu_ms=0)

    def test_repeat_sweeps_agree(self, tmp_path):
        base = ExperimentConfig(env="tictactoe-random-opp", algo="lpo", episodes=(5, 20), runs=2, seed=9)
        sweep(dataclasses.replace(base, out=str(tmp_path / "a.csv")))
        sweep(dataclasses.replace(base, out=str(tmp_path / "b.csv")))
        assert strip_timing(tmp_path / "a.csv") == strip_timing(tmp_path / "b.csv")

    def test_parallel_sweep_matches_serial(self, tmp_path):
        base = ExperimentConfig(env="blackjack", algo="lpo", episodes=(10, 20), runs=2, seed=1)
        sweep(dataclasses.replace(base, out=str(tmp_path / "a.csv")))
        sweep(dataclasses.replace(base, out=str(tmp_path / "b.csv"), workers=2))
        assert strip_timing(tmp_path / "a.csv") == strip_timing(tmp_path / "b.csv")

    def test_csv_layout(self, tmp_path):
        rows = sweep(ExperimentConfig(env="blackjack", algo="lpo", episodes=(10, 20, 40), runs=3))
        path = tmp_path / "r.csv"
        write_results(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 1 + 3 * 3
        assert [(int(r["episodes"]), int(r["run"])) for r in read_results(path)] == [
            (e, r) for e in (10, 20, 40) for r in range(3)
        ]
