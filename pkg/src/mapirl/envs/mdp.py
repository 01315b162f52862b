"""Tabular MDP container and a seeded step simulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import sparse

from mapirl.core import DomainError

ROW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Exact dynamics of a finite MDP.

    ``transition`` is a CSR matrix of shape ``(S*A, S)``; row ``s*A + a`` is
    P(. | s, a). Illegal (s, a) pairs keep a self-loop row so every row is a
    distribution, and ``legal`` masks them out of any maximisation.
    Terminal states self-loop with zero reward under every action.
    """

    transition: sparse.csr_matrix
    true_reward: np.ndarray
    start_dist: np.ndarray
    terminal: np.ndarray
    legal: np.ndarray
    discount: float
    tag: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        S, A = self.true_reward.shape
        P = sparse.csr_matrix(self.transition)
        P.sort_indices()
        if P.shape != (S * A, S):
            raise ValueError(f"transition must have shape {(S * A, S)}, got {P.shape}")
        sums = np.asarray(P.sum(axis=1)).ravel()
        if np.any(np.abs(sums - 1.0) > ROW_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"transition row {divmod(bad, A)} sums to {sums[bad]}")
        if abs(self.start_dist.sum() - 1.0) > ROW_TOL:
            raise ValueError("start distribution must sum to 1")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if np.any(~self.legal.any(axis=1)):
            raise ValueError("every state needs at least one legal action")
        object.__setattr__(self, "transition", P)
        # per-row cumulative probabilities, used by step()
        cum = np.cumsum(P.data)
        offsets = np.repeat(np.r_[0.0, cum][P.indptr[:-1]], np.diff(P.indptr))
        object.__setattr__(self, "_cum", cum - offsets)

    @property
    def state_count(self) -> int:
        return self.true_reward.shape[0]

    @property
    def action_count(self) -> int:
        return self.true_reward.shape[1]

    def legal_actions(self, s: int) -> tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.legal[s]))

    def row(self, s: int, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Successor states and probabilities of (s, a)."""
        i = s * self.action_count + a
        lo, hi = self.transition.indptr[i], self.transition.indptr[i + 1]
        return self.transition.indices[lo:hi], self.transition.data[lo:hi]

    def dense_transition(self) -> np.ndarray:
        return self.transition.toarray().reshape(self.state_count, self.action_count, self.state_count)


def build_model(
    state_count: int,
    action_count: int,
    rows: Iterable[tuple[int, int, int, float]],
    true_reward: np.ndarray,
    start_dist: np.ndarray,
    terminal: np.ndarray,
    legal: Optional[np.ndarray] = None,
    discount: float = 1.0,
    tag: str = "",
    info: Optional[dict] = None,
) -> MdpModel:
    """Assemble an :class:`MdpModel` from ``(s, a, s_next, prob)`` entries.

    Rows for terminal states and illegal pairs are filled in with self-loops;
    entries supplied for them are ignored.
    """
    S, A = state_count, action_count
    terminal = np.asarray(terminal, dtype=bool)
    legal = np.ones((S, A), dtype=bool) if legal is None else np.asarray(legal, dtype=bool).copy()
    legal[terminal] = True
    keep = ~terminal[:, None] & legal
    r, c, v = [], [], []
    for s, a, s2, p in rows:
        if keep[s, a] and p != 0.0:
            r.append(s * A + a)
            c.append(s2)
            v.append(p)
    loop_s, loop_a = np.nonzero(~keep)
    r.extend(loop_s * A + loop_a)
    c.extend(loop_s)
    v.extend(np.ones(len(loop_s)))
    P = sparse.coo_matrix((v, (r, c)), shape=(S * A, S)).tocsr()
    P.sum_duplicates()
    reward = np.array(true_reward, dtype=float)
    reward[terminal] = 0.0
    return MdpModel(
        transition=P,
        true_reward=reward,
        start_dist=np.asarray(start_dist, dtype=float),
        terminal=terminal,
        legal=legal,
        discount=float(discount),
        tag=tag,
        info=dict(info or {}),
    )


def step(model: MdpModel, s: int, a: int, rng: np.random.Generator) -> tuple[int, float, bool]:
    """Sample one transition. Terminal states absorb with zero reward."""
    if model.terminal[s]:
        return s, 0.0, True
    if not (0 <= a < model.action_count) or not model.legal[s, a]:
        raise DomainError(f"action {a} is not legal in state {s}")
    i = s * model.action_count + a
    lo, hi = model.transition.indptr[i], model.transition.indptr[i + 1]
    if hi - lo == 1:
        s2 = int(model.transition.indices[lo])
    else:
        cum = model._cum[lo:hi]
        j = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), hi - lo - 1)
        s2 = int(model.transition.indices[lo + j])
    return s2, float(model.true_reward[s, a]), bool(model.terminal[s2])


def sample_start(model: MdpModel, rng: np.random.Generator, skip_terminal: bool = True) -> int:
    mu = model.start_dist
    if skip_terminal and model.terminal.any():
        mu = np.where(model.terminal, 0.0, mu)
    cum = np.cumsum(mu)
    return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), len(mu) - 1)
