"""Tic-tac-toe game graph and its folding into an MDP for player X.

Boards are 9-tuples in row-major order with X = +1, O = -1 and empty = 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from mapirl.core import DomainError, PolicyTable
from mapirl.envs.mdp import MdpModel, build_model

X, O, EMPTY = 1, -1, 0
LINES = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),  # rows
    (0, 3, 6), (1, 4, 7), (2, 5, 8),  # columns
    (0, 4, 8), (2, 4, 6),  # diagonals
)
LINE_DIRECTIONS = ("h", "h", "h", "v", "v", "v", "d", "d")
EMPTY_BOARD = (EMPTY,) * 9


def winner(board) -> int:
    for i, j, k in LINES:
        if board[i] != EMPTY and board[i] == board[j] == board[k]:
            return board[i]
    return 0


def is_terminal(board) -> bool:
    return winner(board) != 0 or EMPTY not in board


def player_to_move(board) -> int:
    return X if board.count(X) == board.count(O) else O


def play(board, cell: int, player: int):
    if board[cell] != EMPTY:
        raise DomainError(f"cell {cell} is occupied")
    b = list(board)
    b[cell] = player
    return tuple(b)


@dataclass(frozen=True, eq=False)
class GameModel:
    """Reachable positions of an alternating game, indexed breadth-first.

    ``to_move`` is +1 (X), -1 (O) or 0 at terminal positions; ``successor``
    holds the index reached by each legal move (-1 where illegal);
    ``outcome`` is the result for X at terminal positions (0 elsewhere).
    """

    boards: tuple
    to_move: np.ndarray
    legal: np.ndarray
    successor: np.ndarray
    outcome: np.ndarray
    terminal: np.ndarray
    start: int = 0
    index: dict = field(default_factory=dict)

    @property
    def state_count(self) -> int:
        return len(self.boards)

    def legal_moves(self, g: int) -> tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.legal[g]))

    def policy_from_sets(self, moves: list) -> PolicyTable:
        """Uniform over ``moves[g]`` at each to-move position; terminal rows are a dummy one-hot."""
        p = np.zeros((self.state_count, 9))
        for g in range(self.state_count):
            if self.terminal[g]:
                p[g, 0] = 1.0
            else:
                p[g, list(moves[g])] = 1.0 / len(moves[g])
        return PolicyTable(p)

    def uniform_policy(self) -> PolicyTable:
        return self.policy_from_sets([self.legal_moves(g) for g in range(self.state_count)])


def build_tictactoe() -> GameModel:
    boards = [EMPTY_BOARD]
    index = {EMPTY_BOARD: 0}
    queue = deque([EMPTY_BOARD])
    edges = []
    while queue:
        b = queue.popleft()
        if is_terminal(b):
            continue
        p = player_to_move(b)
        for c in range(9):
            if b[c] == EMPTY:
                nb = play(b, c, p)
                if nb not in index:
                    index[nb] = len(boards)
                    boards.append(nb)
                    queue.append(nb)
                edges.append((index[b], c, index[nb]))
    n = len(boards)
    successor = np.full((n, 9), -1, dtype=int)
    for g, c, h in edges:
        successor[g, c] = h
    terminal = np.array([is_terminal(b) for b in boards])
    to_move = np.array([0 if t else player_to_move(b) for b, t in zip(boards, terminal)])
    outcome = np.array([float(winner(b)) for b in boards])
    return GameModel(
        boards=tuple(boards),
        to_move=to_move,
        legal=successor >= 0,
        successor=successor,
        outcome=outcome,
        terminal=terminal,
        start=0,
        index=index,
    )


def fold_game_to_mdp(game: GameModel, opponent: PolicyTable, gamma: float = 1.0, tag: str = "tictactoe") -> MdpModel:
    """MDP seen by X when O's replies are drawn from ``opponent``.

    States are every non-terminal X-to-move position in game order, followed
    by one absorbing terminal state. The reward of (s, a) is the expected
    outcome for X of the positions entered as terminal during that step.
    """
    x_states = np.flatnonzero(game.to_move == X)
    n = len(x_states)
    T = n
    game_to_mdp = np.full(game.state_count, -1, dtype=int)
    game_to_mdp[x_states] = np.arange(n)
    legal = np.zeros((n + 1, 9), dtype=bool)
    reward = np.zeros((n + 1, 9))
    rows = []
    for s, g in enumerate(x_states):
        for a in game.legal_moves(g):
            legal[s, a] = True
            g1 = game.successor[g, a]
            if game.terminal[g1]:
                rows.append((s, a, T, 1.0))
                reward[s, a] = game.outcome[g1]
                continue
            probs = opponent.probs[g1]
            if np.any(probs[~game.legal[g1]] > 0):
                raise DomainError(f"opponent puts mass on an illegal move at position {g1}")
            for b in np.flatnonzero(probs):
                g2 = game.successor[g1, b]
                q = float(probs[b])
                if game.terminal[g2]:
                    rows.append((s, a, T, q))
                    reward[s, a] += q * game.outcome[g2]
                else:
                    rows.append((s, a, int(game_to_mdp[g2]), q))
    terminal = np.zeros(n + 1, dtype=bool)
    terminal[T] = True
    mu = np.zeros(n + 1)
    mu[game_to_mdp[game.start]] = 1.0
    return build_model(
        n + 1,
        9,
        rows,
        reward,
        mu,
        terminal,
        legal=legal,
        discount=gamma,
        tag=tag,
        info={"game_states": np.r_[x_states, -1], "game_to_mdp": game_to_mdp},
    )


def game_policy_from_mdp(policy: PolicyTable, model: MdpModel, game: GameModel) -> PolicyTable:
    """Re-index an X policy on a folded MDP by game position (other rows are dummies)."""
    probs = np.zeros((game.state_count, 9))
    probs[:, 0] = 1.0
    game_states = model.info["game_states"]
    live = game_states >= 0
    probs[game_states[live]] = policy.probs[live]
    return PolicyTable(probs)
