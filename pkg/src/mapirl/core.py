"""Shared domain types, the softmax policy and the demonstration likelihood."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import logsumexp


class ParameterError(ValueError):
    """Parameter vector does not match the feature dimension (or is invalid)."""


class DomainError(ValueError):
    """State/action outside the domain of a model or feature map."""


class NumericalError(ArithmeticError):
    """A numerical routine produced a non-finite value or a singular system."""


LegalFn = Callable[[int], Sequence[int]]


@dataclass(frozen=True)
class Trajectory:
    """One demonstration: parallel state and action index sequences.

    When ``terminal_included`` is set, the last state is the absorbing
    terminal state of an episodic domain and its action is a placeholder. That
    final pair only ever appears as a successor; it never enters the
    likelihood.
    """

    states: tuple[int, ...]
    actions: tuple[int, ...]
    terminal_included: bool = False

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if len(self.states) != len(self.actions):
            raise DomainError("states and actions must have equal length")
        if len(self.states) < 1:
            raise DomainError("a trajectory needs at least one step")
        if min(self.states) < 0 or min(self.actions) < 0:
            raise DomainError("state and action indices must be non-negative")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.states, self.actions))

    def decision_steps(self) -> list[tuple[int, int]]:
        """Pairs that count as observed decisions (excludes a terminal marker)."""
        pairs = self.steps
        return pairs[:-1] if self.terminal_included else pairs


@dataclass(frozen=True)
class DemonstrationSet:
    trajectories: tuple[Trajectory, ...] = ()
    env_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __add__(self, other: "DemonstrationSet") -> "DemonstrationSet":
        return DemonstrationSet(self.trajectories + other.trajectories, self.env_tag or other.env_tag)

    @property
    def n_decisions(self) -> int:
        return sum(len(t.decision_steps()) for t in self.trajectories)


@dataclass(frozen=True, eq=False)
class FeatureMaps:
    """Reward features g_R and value features g_Q over a finite state space.

    All domains in this package are enumerable, so both maps are stored as
    dense tables of shape ``(state_count, action_count, dim)``. ``legal`` is
    an optional ``(state_count, action_count)`` mask; when omitted every
    action is legal everywhere.
    """

    reward_table: np.ndarray
    q_table: np.ndarray
    legal: Optional[np.ndarray] = None
    tag: str = ""

    def __post_init__(self):
        r = np.asarray(self.reward_table, dtype=float)
        q = np.asarray(self.q_table, dtype=float)
        if r.ndim != 3 or q.ndim != 3 or r.shape[:2] != q.shape[:2]:
            raise ParameterError("feature tables must be (states, actions, dim) with matching leading axes")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(q))):
            raise ParameterError("feature tables must be finite")
        r.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "reward_table", r)
        object.__setattr__(self, "q_table", q)
        if self.legal is not None:
            legal = np.asarray(self.legal, dtype=bool)
            if legal.shape != r.shape[:2]:
                raise ParameterError("legal mask shape must be (states, actions)")
            legal.setflags(write=False)
            object.__setattr__(self, "legal", legal)

    @property
    def state_count(self) -> int:
        return self.q_table.shape[0]

    @property
    def action_count(self) -> int:
        return self.q_table.shape[1]

    @property
    def m_R(self) -> int:
        return self.reward_table.shape[2]

    @property
    def m_Q(self) -> int:
        return self.q_table.shape[2]

    def _check(self, s: int, a: int):
        if not (0 <= s < self.state_count and 0 <= a < self.action_count):
            raise DomainError(f"(s={s}, a={a}) outside the feature table")

    def g_R(self, s: int, a: int) -> np.ndarray:
        self._check(s, a)
        return self.reward_table[s, a]

    def g_Q(self, s: int, a: int) -> np.ndarray:
        self._check(s, a)
        return self.q_table[s, a]

    def legal_actions(self, s: int) -> tuple[int, ...]:
        if self.legal is None:
            return tuple(range(self.action_count))
        return tuple(int(a) for a in np.flatnonzero(self.legal[s]))


@dataclass(frozen=True)
class RewardParams:
    w_R: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w_R, dtype=float).ravel()
        if not np.all(np.isfinite(w)):
            raise ParameterError("w_R must be finite")
        object.__setattr__(self, "w_R", w)


@dataclass(frozen=True)
class QParams:
    w_Q: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.w_Q, dtype=float).ravel()
        if not np.all(np.isfinite(w)):
            raise ParameterError("w_Q must be finite")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ParameterError("beta must be a positive finite number")
        object.__setattr__(self, "w_Q", w)


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Per-state action distribution; deterministic policies use one-hot rows."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ParameterError("policy table must be (states, actions)")
        if np.any(p < 0) or np.any(p > 1) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ParameterError("policy rows must be probability vectors")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_actions(cls, actions: Iterable[int], action_count: int) -> "PolicyTable":
        actions = np.asarray(list(actions), dtype=int)
        p = np.zeros((len(actions), action_count))
        p[np.arange(len(actions)), actions] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, legal: np.ndarray) -> "PolicyTable":
        legal = np.asarray(legal, dtype=float)
        return cls(legal / legal.sum(axis=1, keepdims=True))

    @property
    def state_count(self) -> int:
        return self.probs.shape[0]

    @property
    def action_count(self) -> int:
        return self.probs.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    def action(self, s: int, rng: np.random.Generator) -> int:
        row = self.probs[s]
        nz = np.flatnonzero(row)
        if len(nz) == 1:
            return int(nz[0])
        cum = np.cumsum(row)
        i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return min(i, int(nz[-1]))


def _q_values(params: QParams, s: int, legal: Sequence[int], maps: FeatureMaps) -> np.ndarray:
    if len(params.w_Q) != maps.m_Q:
        raise ParameterError(f"w_Q has length {len(params.w_Q)}, features have {maps.m_Q}")
    if len(legal) == 0:
        raise DomainError(f"state {s} has no legal actions")
    phi = np.stack([maps.g_Q(s, a) for a in legal])
    return phi @ params.w_Q


def softmax_policy(params: QParams, s: int, legal: Sequence[int], maps: FeatureMaps) -> np.ndarray:
    """Boltzmann distribution ``exp(beta*Q(s,a))`` normalised over ``legal``."""
    z = params.beta * _q_values(params, s, legal, maps)
    return np.exp(z - logsumexp(z))


def log_likelihood(
    D: DemonstrationSet, params: QParams, maps: FeatureMaps, legal_fn: Optional[LegalFn] = None
) -> float:
    legal_fn = legal_fn or maps.legal_actions
    total = 0.0
    for traj in D:
        for s, a in traj.decision_steps():
            legal = tuple(legal_fn(s))
            if a not in legal:
                raise DomainError(f"action {a} is not legal in state {s}")
            z = params.beta * _q_values(params, s, legal, maps)
            total += z[legal.index(a)] - logsumexp(z)
    return float(total)


def reward_of(params: RewardParams, s: int, a: int, maps: FeatureMaps) -> float:
    if len(params.w_R) != maps.m_R:
        raise ParameterError(f"w_R has length {len(params.w_R)}, features have {maps.m_R}")
    return float(maps.g_R(s, a) @ params.w_R)
