"""Slippery square gridworld with two rewarding corner regions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from mapirl.envs.mdp import MdpModel, build_model

WEST, EAST, NORTH, SOUTH, STILL = range(5)
ACTIONS = ("west", "east", "north", "south", "still")
MOVES = ((-1, 0), (1, 0), (0, 1), (0, -1), (0, 0))


@dataclass(frozen=True)
class RegionSpec:
    """Two half-open rectangles ``(x0, y0, x1, y1)``; the rest of the grid is the third region."""

    lower_left: tuple[int, int, int, int]
    upper_right: tuple[int, int, int, int]

    @classmethod
    def default(cls, side: int) -> "RegionSpec":
        k = max(1, side // 4)
        return cls((0, 0, k, k), (side - k, side - k, side, side))

    def validate(self, side: int):
        for x0, y0, x1, y1 in (self.lower_left, self.upper_right):
            if not (0 <= x0 < x1 <= side and 0 <= y0 < y1 <= side):
                raise ValueError(f"region {(x0, y0, x1, y1)} is empty or outside a {side}x{side} grid")
        a, b = self.lower_left, self.upper_right
        if a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]:
            raise ValueError("corner regions overlap")

    def contains(self, x: int, y: int) -> bool:
        return any(x0 <= x < x1 and y0 <= y < y1 for x0, y0, x1, y1 in (self.lower_left, self.upper_right))


def cell(s: int, side: int) -> tuple[int, int]:
    """``(x, y)`` of state ``s``; y grows northwards, (0, 0) is the lower-left cell."""
    y, x = divmod(s, side)
    return x, y


def state_of(x: int, y: int, side: int) -> int:
    return y * side + x


def build_gridworld(
    side: int = 32,
    slip: float = 0.3,
    region_spec: Optional[RegionSpec] = None,
    *,
    slip_excludes_chosen: bool = False,
    inside_reward: float = 1.0,
    outside_reward: float = -0.1,
    discount: float = 0.95,
) -> MdpModel:
    """Gridworld where a move fails with probability ``slip``.

    A failed move is replaced by a uniformly random one of the five moves
    (including the chosen one, unless ``slip_excludes_chosen``). Moves off
    the grid leave the agent in place. Reward depends on the state only.
    """
    if side < 2:
        raise ValueError("side must be at least 2")
    if not 0.0 <= slip < 1.0:
        raise ValueError("slip must lie in [0, 1)")
    regions = region_spec or RegionSpec.default(side)
    regions.validate(side)
    S = side * side
    rows = []
    reward = np.empty((S, 5))
    for s in range(S):
        x, y = cell(s, side)
        reward[s] = inside_reward if regions.contains(x, y) else outside_reward
        for a in range(5):
            others = [b for b in range(5) if b != a] if slip_excludes_chosen else list(range(5))
            mix = {a: 1.0 - slip}
            for b in others:
                mix[b] = mix.get(b, 0.0) + slip / len(others)
            for b, p in mix.items():
                dx, dy = MOVES[b]
                nx = min(max(x + dx, 0), side - 1)
                ny = min(max(y + dy, 0), side - 1)
                rows.append((s, a, state_of(nx, ny, side), p))
    return build_model(
        S,
        5,
        rows,
        reward,
        np.full(S, 1.0 / S),
        np.zeros(S, dtype=bool),
        discount=discount,
        tag="gridworld",
        info={"side": side, "slip": slip, "regions": regions, "actions": ACTIONS},
    )
