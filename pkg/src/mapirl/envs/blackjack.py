"""Infinite-deck blackjack with a fixed dealer strategy, as a 201-state MDP.

Player states are ``(player_sum, dealer_card, usable_ace)`` with
``player_sum`` in 12..21, ``dealer_card`` in 1..10 (1 = ace) and
``usable_ace`` in {0, 1}; index 200 is the absorbing terminal state.
Hands below 12 are auto-hit while dealing and never appear as states.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np

from mapirl.envs.mdp import MdpModel, build_model

HIT, STICK = 0, 1
ACTIONS = ("hit", "stick")
N_PLAYER_STATES = 200
TERMINAL = 200
STATE_COUNT = 201
NATURAL_REWARD = 1.5

# ranks 1..10; ten, jack, queen and king all count 10
CARD_PROBS = {c: (4 / 13 if c == 10 else 1 / 13) for c in range(1, 11)}


def encode(player_sum: int, dealer_card: int, usable_ace: int) -> int:
    if not (12 <= player_sum <= 21 and 1 <= dealer_card <= 10 and usable_ace in (0, 1)):
        raise ValueError(f"invalid blackjack state {(player_sum, dealer_card, usable_ace)}")
    return (player_sum - 12) * 20 + (dealer_card - 1) * 2 + usable_ace


def decode(s: int) -> Optional[tuple[int, int, int]]:
    """State tuple for ``s``, or None for the terminal state."""
    if s == TERMINAL:
        return None
    if not 0 <= s < N_PLAYER_STATES:
        raise ValueError(f"invalid blackjack state index {s}")
    p, rest = divmod(s, 20)
    d, u = divmod(rest, 2)
    return p + 12, d + 1, u


def add_card(total: int, usable: int, card: int) -> tuple[int, int]:
    """Hand value after drawing ``card``; an ace counts 11 when that doesn't bust."""
    if card == 1 and total + 11 <= 21:
        total, usable = total + 11, 1
    else:
        total += card
    if total > 21 and usable:
        total, usable = total - 10, 0
    return total, usable


@lru_cache(maxsize=None)
def _dealer_from(total: int, usable: int) -> tuple[tuple[int, float], ...]:
    # final dealer total distribution; 22 stands for bust
    if total > 21:
        return ((22, 1.0),)
    if total >= 17:
        return ((total, 1.0),)
    out: dict[int, float] = {}
    for card, p in CARD_PROBS.items():
        for final, q in _dealer_from(*add_card(total, usable, card)):
            out[final] = out.get(final, 0.0) + p * q
    return tuple(sorted(out.items()))


def dealer_final_distribution(dealer_card: int) -> dict[int, float]:
    """Distribution of the dealer's final total (22 = bust) given the up card."""
    total, usable = add_card(0, 0, dealer_card)
    return dict(_dealer_from(total, usable))


def stick_reward(player_sum: int, dealer_card: int) -> float:
    """Expected payoff of sticking on ``player_sum``."""
    r = 0.0
    for final, p in dealer_final_distribution(dealer_card).items():
        if final > 21 or player_sum > final:
            r += p
        elif player_sum < final:
            r -= p
    return r


def _initial_player_distribution() -> tuple[dict[tuple[int, int], float], float]:
    """Distribution of (sum, usable) after the deal and auto-hits, and P(natural)."""
    dist: dict[tuple[int, int], float] = {}
    natural = 0.0

    def settle(total, usable, p):
        if total >= 12:
            dist[(total, usable)] = dist.get((total, usable), 0.0) + p
            return
        for card, q in CARD_PROBS.items():
            settle(*add_card(total, usable, card), p * q)

    for c1, p1 in CARD_PROBS.items():
        for c2, p2 in CARD_PROBS.items():
            total, usable = add_card(*add_card(0, 0, c1), c2)
            if total == 21:
                natural += p1 * p2
            else:
                settle(total, usable, p1 * p2)
    return dist, natural


def build_blackjack() -> MdpModel:
    rows = []
    reward = np.zeros((STATE_COUNT, 2))
    for s in range(N_PLAYER_STATES):
        p_sum, dealer, usable = decode(s)
        rows.append((s, STICK, TERMINAL, 1.0))
        reward[s, STICK] = stick_reward(p_sum, dealer)
        bust = 0.0
        for card, p in CARD_PROBS.items():
            total, u = add_card(p_sum, usable, card)
            if total > 21:
                rows.append((s, HIT, TERMINAL, p))
                bust += p
            else:
                rows.append((s, HIT, encode(total, dealer, u), p))
        reward[s, HIT] = -bust

    player, natural = _initial_player_distribution()
    mu = np.zeros(STATE_COUNT)
    for (total, usable), p in player.items():
        for dealer, q in CARD_PROBS.items():
            mu[encode(total, dealer, usable)] += p * q
    # a natural is settled on the deal: no decision, fixed payoff
    mu[TERMINAL] = natural
    terminal = np.zeros(STATE_COUNT, dtype=bool)
    terminal[TERMINAL] = True
    return build_model(
        STATE_COUNT,
        2,
        rows,
        reward,
        mu,
        terminal,
        discount=1.0,
        tag="blackjack",
        info={"natural_reward": NATURAL_REWARD, "natural_prob": natural, "actions": ACTIONS},
    )
