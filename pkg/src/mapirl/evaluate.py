"""Exact evaluation on known models: dynamic programming, loss, minimax, match play.

Nothing here is used by the learners; it needs the true dynamics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from mapirl.core import DomainError, NumericalError, PolicyTable
from mapirl.envs.mdp import MdpModel
from mapirl.envs.tictactoe import GameModel, X

MAX_SWEEPS = 100_000


class ConvergenceError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class ValueFunctions:
    V: np.ndarray
    Q: np.ndarray
    policy: PolicyTable
    iterations: int = 0


@dataclass(frozen=True)
class MatchStats:
    wins: int = 0
    draws: int = 0
    losses: int = 0
    mean_score: float = 0.0
    score_var: float = 0.0

    @property
    def games(self) -> int:
        return self.wins + self.draws + self.losses


def _reward(model: MdpModel, reward: Optional[np.ndarray]) -> np.ndarray:
    r = model.true_reward if reward is None else np.array(reward, dtype=float)
    if r.shape != model.true_reward.shape:
        raise ValueError(f"reward must have shape {model.true_reward.shape}")
    r = r.copy()
    r[model.terminal] = 0.0
    return r


def bellman_q(model: MdpModel, reward: np.ndarray, V: np.ndarray) -> np.ndarray:
    S, A = reward.shape
    return reward + model.discount * (model.transition @ V).reshape(S, A)


def _greedy(model: MdpModel, Q: np.ndarray) -> tuple[np.ndarray, PolicyTable]:
    Qm = np.where(model.legal, Q, -np.inf)
    return Qm.max(axis=1), PolicyTable.from_actions(np.argmax(Qm, axis=1), model.action_count)


def value_iteration(model: MdpModel, reward: Optional[np.ndarray] = None, tol: float = 1e-8) -> ValueFunctions:
    """Optimal V and Q of ``model`` under ``reward`` (default: the true reward).

    Iterates until the Bellman residual guarantees ``|V - V*| < tol``.
    """
    r = _reward(model, reward)
    gamma = model.discount
    stop = tol * (1.0 - gamma) if gamma < 1.0 else tol
    V = np.zeros(model.state_count)
    for sweep in range(1, MAX_SWEEPS + 1):
        Q = bellman_q(model, r, V)
        V_new, policy = _greedy(model, Q)
        residual = np.abs(V_new - V).max()
        V = V_new
        if residual < stop:
            return ValueFunctions(V, Q, policy, sweep)
    raise ConvergenceError(f"value iteration did not converge in {MAX_SWEEPS} sweeps (residual {residual:.3g})")


def _policy_matrices(model: MdpModel, pi: PolicyTable, r: np.ndarray):
    S, A = r.shape
    if pi.probs.shape != (S, A):
        raise ValueError(f"policy must have shape {(S, A)}")
    W = sparse.csr_matrix(
        (pi.probs.ravel(), (np.repeat(np.arange(S), A), np.arange(S * A))), shape=(S, S * A)
    )
    return (W @ model.transition).tocsr(), (pi.probs * r).sum(axis=1)


def policy_evaluation(
    model: MdpModel, pi: PolicyTable, reward: Optional[np.ndarray] = None, tol: float = 1e-8
) -> np.ndarray:
    """V^pi by a direct sparse solve of ``(I - gamma P_pi) V = r_pi``.

    Terminal states are pinned to zero. ``tol`` bounds the accepted residual.
    """
    r = _reward(model, reward)
    P_pi, r_pi = _policy_matrices(model, pi, r)
    live = np.flatnonzero(~model.terminal)
    V = np.zeros(model.state_count)
    if len(live):
        M = sparse.identity(len(live), format="csc") - model.discount * P_pi[live][:, live].tocsc()
        # a singular system (improper policy) is caught by the residual check below
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            V[live] = spsolve(M, r_pi[live])
    residual = np.abs(V - (r_pi + model.discount * (P_pi @ V))).max(initial=0.0) if np.all(np.isfinite(V)) else np.inf
    if not residual < max(tol, 1e-9):
        raise ConvergenceError(f"policy evaluation failed (residual {residual:.3g}); is the policy proper?")
    return V


def loss(model: MdpModel, pi: PolicyTable, tol: float = 1e-8) -> float:
    """Start-weighted optimality gap ``sum_s mu(s) (V*(s) - V^pi(s))`` under the true reward."""
    v_star = value_iteration(model, tol=tol).V
    v_pi = policy_evaluation(model, pi, tol=tol)
    return float(model.start_dist @ (v_star - v_pi))


def minimax_solve(game: GameModel) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Game value for X of every position and the value-preserving moves there."""
    n = game.state_count
    value = np.zeros(n)
    best: list[tuple[int, ...]] = [()] * n
    # successors always have more marks, hence a larger breadth-first index
    for g in range(n - 1, -1, -1):
        if game.terminal[g]:
            value[g] = game.outcome[g]
            continue
        moves = game.legal_moves(g)
        vals = value[game.successor[g, list(moves)]]
        target = vals.max() if game.to_move[g] == X else vals.min()
        value[g] = target
        best[g] = tuple(m for m, v in zip(moves, vals) if v == target)
    return value, best


def minimax_policy(game: GameModel) -> PolicyTable:
    """Uniform random choice among minimax-optimal moves, for whichever side is to move."""
    return game.policy_from_sets(minimax_solve(game)[1])


def play_match(
    x_policy: PolicyTable, o_policy: PolicyTable, game: GameModel, n_games: int, seed: int = 0
) -> MatchStats:
    """Play ``n_games`` games; game i draws its moves from ``default_rng([seed, i])``.

    Both policies are indexed by game position.
    """
    if n_games <= 0:
        return MatchStats()
    scores = np.empty(n_games)
    for i in range(n_games):
        rng = np.random.default_rng([seed, i])
        g = game.start
        while not game.terminal[g]:
            pol = x_policy if game.to_move[g] == X else o_policy
            a = pol.action(g, rng)
            if not game.legal[g, a]:
                raise DomainError(f"policy for {'X' if game.to_move[g] == X else 'O'} plays illegal move {a} at {g}")
            g = game.successor[g, a]
        scores[i] = game.outcome[g]
    return MatchStats(
        wins=int((scores > 0).sum()),
        draws=int((scores == 0).sum()),
        losses=int((scores < 0).sum()),
        mean_score=float(scores.mean()),
        score_var=float(scores.var(ddof=1)) if n_games > 1 else 0.0,
    )
