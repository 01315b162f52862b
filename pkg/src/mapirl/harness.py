"""Experts, demonstration generation and seeded experiment sweeps."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from mapirl.core import DemonstrationSet, FeatureMaps, NumericalError, PolicyTable, Trajectory
from mapirl.envs import blackjack, gridworld, tictactoe
from mapirl.envs.mdp import MdpModel, sample_start, step
from mapirl.evaluate import loss, minimax_policy, minimax_solve, value_iteration
from mapirl.features import blackjack_maps, gridworld_maps, tictactoe_maps
from mapirl.solver import SolverConfig, fit_lpo, fit_lrp, greedy_policy

log = logging.getLogger(__name__)

ENV_TAGS = ("blackjack", "gridworld", "tictactoe-random-opp", "tictactoe-optimal-opp")
ALGOS = ("lrp", "lpo")
EXTRACTIONS = ("q-greedy", "reward-vi")
CSV_HEADER = ("env", "algo", "episodes", "run", "seed", "loss", "fit_cpu_ms", "converged")
GRIDWORLD_HORIZON = 8
MAX_EPISODE_STEPS = 10_000


@dataclass(frozen=True, eq=False)
class Environment:
    """Everything an experiment needs about one domain.

    Demonstrations are drawn on ``demo_model``; losses are measured on
    ``eval_model``. They differ only for tic-tac-toe against the optimal
    opponent, where the expert still plays a uniformly random O.
    """

    tag: str
    demo_model: MdpModel
    eval_model: MdpModel
    maps: FeatureMaps
    horizon: Optional[int]
    game: Optional[tictactoe.GameModel] = None


@lru_cache(maxsize=None)
def _tictactoe_game():
    return tictactoe.build_tictactoe()


@lru_cache(maxsize=None)
def make_env(tag: str, side: int = 32, one_hot: bool = False) -> Environment:
    """Build (and cache) the named domain. ``side``/``one_hot`` apply to gridworld only."""
    if tag == "blackjack":
        model = blackjack.build_blackjack()
        return Environment(tag, model, model, blackjack_maps(), None)
    if tag == "gridworld":
        model = gridworld.build_gridworld(side)
        return Environment(tag, model, model, gridworld_maps(side, one_hot=one_hot), GRIDWORLD_HORIZON)
    if tag in ("tictactoe-random-opp", "tictactoe-optimal-opp"):
        game = _tictactoe_game()
        demo = tictactoe.fold_game_to_mdp(game, game.uniform_policy(), tag="tictactoe-random-opp")
        if tag == "tictactoe-random-opp":
            evaluation = demo
        else:
            evaluation = tictactoe.fold_game_to_mdp(game, minimax_policy(game), tag=tag)
        return Environment(tag, demo, evaluation, tictactoe_maps(game, demo), None, game)
    raise ValueError(f"unknown environment {tag!r}; expected one of {ENV_TAGS}")


def build_expert(env: Environment) -> PolicyTable:
    """Optimal policy for MDP domains; uniform over minimax-optimal moves for tic-tac-toe."""
    if env.game is None:
        return value_iteration(env.demo_model).policy
    _, best = minimax_solve(env.game)
    game_states = env.demo_model.info["game_states"]
    probs = np.zeros((env.demo_model.state_count, 9))
    for s, g in enumerate(game_states):
        if g < 0:
            probs[s, 0] = 1.0
        else:
            probs[s, list(best[g])] = 1.0 / len(best[g])
    return PolicyTable(probs)


_expert_for = lru_cache(maxsize=None)(build_expert)


def generate_demos(
    model: MdpModel,
    expert: PolicyTable,
    n_episodes: int,
    horizon: Optional[int],
    seed: int,
    env_tag: str = "",
) -> DemonstrationSet:
    """Roll out ``expert`` from start states drawn from mu.

    With ``horizon`` set, episodes are cut after that many steps; otherwise
    they run until the terminal state, which is appended with a placeholder
    action 0 and ``terminal_included=True``. Start states that are already
    terminal (a blackjack natural) involve no decision and are redrawn.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    rng = np.random.default_rng(seed)
    limit = horizon if horizon is not None else MAX_EPISODE_STEPS
    trajectories = []
    for _ in range(n_episodes):
        s = sample_start(model, rng)
        states, actions = [], []
        done = False
        for _ in range(limit):
            a = expert.action(s, rng)
            states.append(s)
            actions.append(a)
            s, _, done = step(model, s, a, rng)
            if done:
                break
        if done:
            states.append(s)
            actions.append(0)
        trajectories.append(Trajectory(tuple(states), tuple(actions), terminal_included=done))
    return DemonstrationSet(tuple(trajectories), env_tag or model.tag)


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "blackjack"
    algo: str = "lpo"
    episodes: tuple[int, ...] = (10, 100, 1000, 10000)
    runs: int = 20
    horizon: Optional[int] = None
    gamma: Optional[float] = None
    beta: float = 1.0
    ridge: Optional[float] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    out: Optional[str] = None
    workers: int = 1
    serial_reduce: bool = False
    side: int = 32
    extraction: str = "q-greedy"

    def __post_init__(self):
        if self.env not in ENV_TAGS:
            raise ValueError(f"unknown environment {self.env!r}")
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}")
        eps = tuple(int(e) for e in self.episodes)
        if not eps or min(eps) < 1 or list(eps) != sorted(eps):
            raise ValueError("episode counts must be positive and sorted")
        object.__setattr__(self, "episodes", eps)
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.extraction not in EXTRACTIONS:
            raise ValueError(f"unknown extraction {self.extraction!r}")

    def environment(self) -> Environment:
        return make_env(self.env, self.side)


@dataclass(frozen=True)
class ResultRow:
    env: str
    algo: str
    episodes: int
    run: int
    seed: int
    loss: float
    fit_cpu_ms: int
    converged: bool

    def csv_fields(self) -> list[str]:
        return [
            self.env,
            self.algo,
            str(self.episodes),
            str(self.run),
            str(self.seed),
            repr(self.loss),
            str(self.fit_cpu_ms),
            "true" if self.converged else "false",
        ]


def cell_seed(master_seed: int, episodes: int, run_index: int) -> int:
    """Seed of one sweep cell; independent of the algorithm so both see the same data."""
    return int(np.random.SeedSequence([master_seed, episodes, run_index]).generate_state(1, np.uint32)[0])


def improved_policy(env: Environment, algo: str, params: dict, extraction: str = "q-greedy") -> PolicyTable:
    """Policy derived from fitted parameters.

    Both models act greedily on their value weights by default; for LRP these
    are ``C @ w_R``, one policy-improvement step from the demonstrations.
    With ``extraction="reward-vi"`` LRP instead solves the evaluation model
    under the learned reward by value iteration, which needs the dynamics.
    """
    if extraction not in EXTRACTIONS:
        raise ValueError(f"unknown extraction {extraction!r}; expected one of {EXTRACTIONS}")
    if algo == "lrp" and extraction == "reward-vi":
        reward = env.maps.reward_table @ np.asarray(params["w_R"])
        return value_iteration(env.eval_model, reward).policy
    return greedy_policy(np.asarray(params["w_Q"]), env.maps)


def default_gamma(env: Environment) -> float:
    return env.demo_model.discount


def fit(env: Environment, D: DemonstrationSet, algo: str, gamma: float, beta: float, ridge: Optional[float],
        solver: SolverConfig, serial: bool = False) -> dict:
    """Fit one model and return its serialisable parameter document."""
    if algo == "lpo":
        w_Q, result = fit_lpo(D, env.maps, beta, solver)
        doc = {"model": "lpo", "w_Q": w_Q.w_Q.tolist()}
    elif algo == "lrp":
        out = fit_lrp(D, env.maps, gamma, beta, ridge, solver, serial=serial)
        result = out.result
        doc = {"model": "lrp", "w_R": out.w_R.w_R.tolist(), "w_Q": out.w_Q.w_Q.tolist()}
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    doc.update(
        beta=beta,
        gamma=gamma,
        ridge=ridge,
        feature_spec=env.maps.tag,
        env=env.tag,
        objective=result.objective,
        converged=result.converged,
        iterations=result.iterations,
        message=result.message,
    )
    return doc


def run_cell(config: ExperimentConfig, episodes: int, run_index: int) -> ResultRow:
    env = config.environment()
    seed = cell_seed(config.seed, episodes, run_index)
    horizon = config.horizon if config.horizon is not None else env.horizon
    gamma = config.gamma if config.gamma is not None else default_gamma(env)
    D = generate_demos(env.demo_model, _expert_for(env), episodes, horizon, seed, env.tag)
    t0 = time.process_time()
    try:
        params = fit(env, D, config.algo, gamma, config.beta, config.ridge, config.solver, config.serial_reduce)
    except (NumericalError, ValueError) as e:
        log.warning("fit failed for %s/%s episodes=%d run=%d: %s", config.env, config.algo, episodes, run_index, e)
        cpu_ms = int(round(1000 * (time.process_time() - t0)))
        return ResultRow(config.env, config.algo, episodes, run_index, seed, float("nan"), cpu_ms, False)
    cpu_ms = int(round(1000 * (time.process_time() - t0)))
    try:
        value = loss(env.eval_model, improved_policy(env, config.algo, params, config.extraction))
    except NumericalError as e:
        log.warning("evaluation failed for episodes=%d run=%d: %s", episodes, run_index, e)
        value = float("nan")
    return ResultRow(config.env, config.algo, episodes, run_index, seed, value, cpu_ms, bool(params["converged"]))


def _run_cell_args(args):
    return run_cell(*args)


def sweep(config: ExperimentConfig) -> list[ResultRow]:
    """Run every (episodes, run) cell; rows come back in (episodes, run) order."""
    cells = [(config, e, r) for e in config.episodes for r in range(config.runs)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_cell_args, cells))
    else:
        rows = [run_cell(*c) for c in cells]
    if config.out:
        write_results(rows, config.out)
    return rows


def write_results(rows: Sequence[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(row.csv_fields())


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
