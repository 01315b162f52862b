"""Feature maps for the benchmark domains.

Orderings are fixed and listed in ``docs/FEATURES.md``; the ``*_feature_names``
helpers return the same lists programmatically.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Callable, Iterable, Sequence

import numpy as np

from mapirl.core import DomainError, FeatureMaps
from mapirl.envs import blackjack as bj
from mapirl.envs import gridworld as gw
from mapirl.envs import tictactoe as ttt
from mapirl.envs.mdp import MdpModel


@dataclass(frozen=True)
class ScaleRange:
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("ScaleRange needs lo < hi")


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-dimension affine map fitted once on a sample matrix."""

    minimum: np.ndarray
    maximum: np.ndarray
    scale_range: ScaleRange

    @classmethod
    def fit(cls, samples: np.ndarray, scale_range: ScaleRange = ScaleRange()) -> "FeatureScaler":
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[0] == 0:
            raise ValueError("cannot fit a scaler on an empty sample set")
        return cls(samples.min(axis=0), samples.max(axis=0), scale_range)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.scale_range.lo, self.scale_range.hi
        span = self.maximum - self.minimum
        const = span == 0
        t = (np.asarray(x, dtype=float) - self.minimum) / np.where(const, 1.0, span)
        out = lo + (hi - lo) * t
        return np.where(const, 0.5 * (lo + hi), out)


def scale_features(
    feature_fn: Callable[..., np.ndarray], samples: Iterable, scale_range: ScaleRange = ScaleRange()
) -> Callable[..., np.ndarray]:
    """Wrap ``feature_fn`` so its outputs on ``samples`` span ``scale_range``.

    ``samples`` are argument tuples (or single arguments) for ``feature_fn``.
    Constant dimensions map to the midpoint of the range.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cannot fit a scaler on an empty sample set")
    call = lambda x: feature_fn(*x) if isinstance(x, tuple) else feature_fn(x)  # noqa: E731
    scaler = FeatureScaler.fit(np.stack([call(x) for x in samples]), scale_range)

    def scaled(*args):
        return scaler(feature_fn(*args))

    scaled.scaler = scaler
    return scaled


def quadratic_terms(values: Sequence[float]) -> list[float]:
    """All products ``v_i * v_j`` with ``i <= j`` in lexicographic order."""
    return [values[i] * values[j] for i, j in combinations_with_replacement(range(len(values)), 2)]


def polynomial_features(values: Sequence[float], degree: int = 2) -> list[float]:
    """Monomials of degree 1..``degree`` (no bias), grouped by degree."""
    out = []
    for d in range(1, degree + 1):
        for idx in combinations_with_replacement(range(len(values)), d):
            out.append(float(np.prod([values[i] for i in idx])))
    return out


# --- blackjack -----------------------------------------------------------

BLACKJACK_DIM = 14


def blackjack_feature_names() -> list[str]:
    names = ["p", "d", "u"]
    poly = names + [f"{names[i]}*{names[j]}" for i, j in combinations_with_replacement(range(3), 2)]
    return ["bias"] + poly + ["d==1", "d==10", "p==12", "p==21"]


def blackjack_reward_features(s: int) -> np.ndarray:
    """Raw (unscaled) 14-vector of a blackjack state; zeros for the terminal state."""
    try:
        state = bj.decode(s)
    except ValueError as e:
        raise DomainError(str(e)) from None
    if state is None:
        return np.zeros(BLACKJACK_DIM)
    p, d, u = state
    return np.array(
        [1.0] + polynomial_features([p, d, u], 2) + [d == 1, d == 10, p == 12, p == 21],
        dtype=float,
    )


# --- gridworld -----------------------------------------------------------


def gridworld_feature_names(side: int) -> list[str]:
    return ["x", "y"] + [f"x<{t}" for t in range(1, side)] + [f"y<{t}" for t in range(1, side)]


def gridworld_reward_features(s: int, side: int) -> np.ndarray:
    if not 0 <= s < side * side:
        raise DomainError(f"state {s} is not on a {side}x{side} grid")
    x, y = gw.cell(s, side)
    t = np.arange(1, side)
    return np.concatenate([[x, y], x < t, y < t]).astype(float)


# --- tic-tac-toe ---------------------------------------------------------

PATTERN_NAMES = ("singlets", "doublets", "triplets", "diversity", "crosspoints")


def tictactoe_feature_names() -> list[str]:
    base = [f"{p}_{n}" for p in ("X", "O") for n in PATTERN_NAMES]
    quad = [f"{base[i]}*{base[j]}" for i, j in combinations_with_replacement(range(10), 2)]
    return base + quad + [f"cell{c}" for c in range(9)]


def _patterns(board, player: int) -> list[int]:
    singlet_lines = []
    doublets = triplets = 0
    for k, line in enumerate(ttt.LINES):
        vals = [board[c] for c in line]
        mine, theirs = vals.count(player), vals.count(-player)
        if theirs:
            continue
        if mine == 1:
            singlet_lines.append(k)
        elif mine == 2:
            doublets += 1
        elif mine == 3:
            triplets += 1
    diversity = len({ttt.LINE_DIRECTIONS[k] for k in singlet_lines})
    crosspoints = 0
    for c in range(9):
        if board[c] == ttt.EMPTY and sum(c in ttt.LINES[k] for k in singlet_lines) >= 2:
            crosspoints += 1
    return [len(singlet_lines), doublets, triplets, diversity, crosspoints]


def tictactoe_pattern_counts(board) -> np.ndarray:
    """The 10 base counts: (singlets, doublets, triplets, diversity, crosspoints) for X then O."""
    return np.array(_patterns(board, ttt.X) + _patterns(board, ttt.O), dtype=float)


def tictactoe_reward_features(board) -> np.ndarray:
    board = tuple(board)
    if len(board) != 9 or any(v not in (ttt.X, ttt.O, ttt.EMPTY) for v in board):
        raise DomainError(f"invalid board {board}")
    base = tictactoe_pattern_counts(board)
    return np.concatenate([base, quadratic_terms(base), np.asarray(board, dtype=float)])


def tictactoe_q_features(board, a: int) -> np.ndarray:
    """Features of the position right after X plays ``a`` (before O replies)."""
    return tictactoe_reward_features(ttt.play(tuple(board), a, ttt.X))


# --- value features ------------------------------------------------------


def lift_q_features(state_features: np.ndarray, action_count: int) -> np.ndarray:
    """Place each state's reward features in the block of the chosen action.

    ``state_features`` has shape ``(S, m_R)``; the result has shape
    ``(S, action_count, action_count * m_R)``.
    """
    if action_count < 1:
        raise ValueError("action_count must be at least 1")
    phi = np.asarray(state_features, dtype=float)
    S, m = phi.shape
    out = np.zeros((S, action_count, action_count * m))
    for a in range(action_count):
        out[:, a, a * m:(a + 1) * m] = phi
    return out


def _state_action_table(state_features: np.ndarray, action_count: int) -> np.ndarray:
    return np.repeat(state_features[:, None, :], action_count, axis=1)


# --- per-domain bundles --------------------------------------------------


def blackjack_maps(scale_range: ScaleRange = ScaleRange(0.0, 1.0)) -> FeatureMaps:
    raw = np.stack([blackjack_reward_features(s) for s in range(bj.STATE_COUNT)])
    live = np.arange(bj.STATE_COUNT) != bj.TERMINAL
    phi = np.zeros_like(raw)
    phi[live] = FeatureScaler.fit(raw[live], scale_range)(raw[live])
    phi[live, 0] = 1.0  # the bias is left unscaled
    return FeatureMaps(_state_action_table(phi, 2), lift_q_features(phi, 2), tag="blackjack-poly14")


def gridworld_maps(
    side: int, scale_range: ScaleRange = ScaleRange(0.0, 1.0), one_hot: bool = False
) -> FeatureMaps:
    """Threshold features (or one-hot state indicators when ``one_hot``)."""
    S = side * side
    if one_hot:
        phi = np.eye(S)
        tag = f"gridworld{side}-onehot"
    else:
        raw = np.stack([gridworld_reward_features(s, side) for s in range(S)])
        phi = FeatureScaler.fit(raw, scale_range)(raw)
        tag = f"gridworld{side}-thresh{phi.shape[1]}"
    return FeatureMaps(_state_action_table(phi, 5), lift_q_features(phi, 5), tag=tag)


def tictactoe_maps(
    game: ttt.GameModel, model: MdpModel, scale_range: ScaleRange = ScaleRange(-1.0, 1.0)
) -> FeatureMaps:
    """Board features for g_R and afterstate features for g_Q on a folded MDP."""
    all_raw = np.stack([tictactoe_reward_features(b) for b in game.boards])
    scaler = FeatureScaler.fit(all_raw, scale_range)
    scaled = scaler(all_raw)
    S, m = model.state_count, all_raw.shape[1]
    game_states = model.info["game_states"]
    r_tab = np.zeros((S, 9, m))
    q_tab = np.zeros((S, 9, m))
    for s in range(S):
        g = game_states[s]
        if g < 0:
            continue
        r_tab[s] = scaled[g]
        for a in game.legal_moves(g):
            q_tab[s, a] = scaled[game.successor[g, a]]
    return FeatureMaps(r_tab, q_tab, legal=model.legal, tag="tictactoe-patterns74")
