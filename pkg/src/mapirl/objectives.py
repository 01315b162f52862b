"""Log-posterior objectives of the LRP and LPO models and their gradients.

Under flat priors both objectives reduce to the softmax log-likelihood of
the demonstrated actions, with value weights ``C @ w_R`` (LRP) or ``w_Q``
(LPO). Both are concave in their parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from mapirl.core import DemonstrationSet, DomainError, FeatureMaps, LegalFn, ParameterError, QParams, RewardParams


@dataclass(frozen=True)
class ObjectiveEval:
    value: float
    gradient: np.ndarray


@dataclass(frozen=True, eq=False)
class StepBatch:
    """Demonstrated decisions grouped into distinct (state, action) pairs.

    ``phi_all[i, k]`` is g_Q of the k-th candidate action of pair i, with
    ``mask`` marking real (legal) candidates; ``weight`` is the number of
    times the pair was observed.
    """

    phi_taken: np.ndarray
    phi_all: np.ndarray
    mask: np.ndarray
    weight: np.ndarray

    @property
    def dim(self) -> int:
        return self.phi_taken.shape[1]

    @property
    def n_steps(self) -> int:
        return int(self.weight.sum())


def compile_steps(D: DemonstrationSet, maps: FeatureMaps, legal_fn: Optional[LegalFn] = None) -> StepBatch:
    pairs = [p for traj in D for p in traj.decision_steps()]
    A = maps.action_count
    if not pairs:
        return StepBatch(np.zeros((0, maps.m_Q)), np.zeros((0, A, maps.m_Q)), np.zeros((0, A), bool), np.zeros(0))
    sa = np.asarray(pairs, dtype=int)
    if sa[:, 0].max() >= maps.state_count or sa[:, 1].max() >= A:
        raise DomainError("demonstration indices exceed the feature table")
    keys, counts = np.unique(sa[:, 0] * A + sa[:, 1], return_counts=True)
    s, a = np.divmod(keys, A)
    if legal_fn is None:
        mask = np.ones((len(s), A), bool) if maps.legal is None else maps.legal[s].copy()
    else:
        mask = np.zeros((len(s), A), bool)
        for i, si in enumerate(s):
            mask[i, list(legal_fn(int(si)))] = True
    if not mask[np.arange(len(s)), a].all():
        i = int(np.flatnonzero(~mask[np.arange(len(s)), a])[0])
        raise DomainError(f"action {a[i]} is not legal in state {s[i]}")
    return StepBatch(maps.q_table[s, a], maps.q_table[s], mask, counts.astype(float))


def separating_direction(batch: StepBatch, C: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """A direction along which the log-likelihood keeps rising, or None.

    Such a direction exists when the demonstrated actions can be ranked at
    least as high as every alternative by some ``w`` (``C @ w`` for LRP),
    strictly for at least one of them. The objective then has no finite
    maximiser. Found by a linear program with the margins capped at 1, so a
    separable batch scores at least 1 and anything else scores 0.
    """
    if len(batch.weight) == 0:
        return None
    rows, alt = np.nonzero(batch.mask)
    delta = batch.phi_taken[rows] - batch.phi_all[rows, alt]
    if C is not None:
        delta = delta @ C
    delta = delta[np.abs(delta).max(axis=1) > 0]
    if len(delta) == 0:
        return None
    m = delta.shape[1]
    res = linprog(
        -delta.sum(axis=0),
        A_ub=np.vstack([-delta, delta]),
        b_ub=np.concatenate([np.zeros(len(delta)), np.ones(len(delta))]),
        bounds=[(None, None)] * m,
        method="highs",
    )
    if res.status != 0 or -res.fun < 0.5:
        return None
    return res.x


def _as_batch(D, maps, legal_fn) -> StepBatch:
    return D if isinstance(D, StepBatch) else compile_steps(D, maps, legal_fn)


def softmax_objective(w_Q: np.ndarray, batch: StepBatch, beta: float = 1.0) -> ObjectiveEval:
    """Log-likelihood of ``batch`` under the softmax policy of ``w_Q`` and its gradient."""
    w_Q = np.asarray(w_Q, dtype=float)
    if w_Q.shape != (batch.dim,):
        raise ParameterError(f"parameter has shape {w_Q.shape}, features have dimension {batch.dim}")
    if not beta > 0:
        raise ParameterError("beta must be positive")
    if len(batch.weight) == 0:
        return ObjectiveEval(0.0, np.zeros_like(w_Q))
    z = np.where(batch.mask, beta * (batch.phi_all @ w_Q), -np.inf)
    lse = logsumexp(z, axis=1)
    taken = beta * (batch.phi_taken @ w_Q)
    value = float(batch.weight @ (taken - lse))
    p = np.exp(z - lse[:, None])
    expected = np.einsum("nk,nkm->nm", p, batch.phi_all)
    grad = beta * (batch.weight @ (batch.phi_taken - expected))
    return ObjectiveEval(value, grad)


def lpo_objective(
    w_Q: Union[QParams, np.ndarray],
    D: Union[DemonstrationSet, StepBatch],
    maps: FeatureMaps,
    legal_fn: Optional[LegalFn] = None,
    beta: Optional[float] = None,
) -> ObjectiveEval:
    if isinstance(w_Q, QParams):
        beta = w_Q.beta if beta is None else beta
        w_Q = w_Q.w_Q
    if len(w_Q) != maps.m_Q:
        raise ParameterError(f"w_Q has length {len(w_Q)}, g_Q has {maps.m_Q}")
    return softmax_objective(w_Q, _as_batch(D, maps, legal_fn), 1.0 if beta is None else beta)


def lrp_objective(
    w_R: Union[RewardParams, np.ndarray],
    D: Union[DemonstrationSet, StepBatch],
    C: np.ndarray,
    beta: float,
    maps: FeatureMaps,
    legal_fn: Optional[LegalFn] = None,
) -> ObjectiveEval:
    """Objective over reward weights; value weights are ``C @ w_R``."""
    w_R = np.asarray(getattr(w_R, "w_R", w_R), dtype=float)
    C = np.asarray(C, dtype=float)
    if C.shape != (maps.m_Q, len(w_R)):
        raise ParameterError(f"C has shape {C.shape}, expected {(maps.m_Q, len(w_R))}")
    inner = softmax_objective(C @ w_R, _as_batch(D, maps, legal_fn), beta)
    return ObjectiveEval(inner.value, C.T @ inner.gradient)


def identity_reduction_check(
    D: DemonstrationSet,
    maps: FeatureMaps,
    beta: float = 1.0,
    w: Optional[np.ndarray] = None,
    seed: int = 0,
    atol: float = 1e-10,
) -> bool:
    """LRP with ``C = I`` and ``g_R := g_Q`` must coincide with LPO at ``w_Q = w_R``."""
    same = FeatureMaps(maps.q_table, maps.q_table, legal=maps.legal, tag=maps.tag)
    if w is None:
        w = np.random.default_rng(seed).normal(size=same.m_Q)
    batch = compile_steps(D, same)
    lrp = lrp_objective(w, batch, np.eye(same.m_Q), beta, same)
    lpo = lpo_objective(w, batch, same, beta=beta)
    return bool(
        abs(lrp.value - lpo.value) <= atol * max(1.0, abs(lpo.value))
        and np.allclose(lrp.gradient, lpo.gradient, rtol=0, atol=atol * max(1.0, np.abs(lpo.gradient).max(initial=0)))
    )
