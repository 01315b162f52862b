"""On-policy LSTDQ: the linear map C from reward weights to value weights."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mapirl.core import DemonstrationSet, DomainError, FeatureMaps, NumericalError, ParameterError

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class LstdqMatrices:
    A: np.ndarray
    Z: np.ndarray
    C: np.ndarray
    ridge: float
    gamma: float
    residual: float


def _transition_indices(D: DemonstrationSet) -> tuple[np.ndarray, ...]:
    s, a, s2, a2 = [], [], [], []
    for traj in D:
        s.extend(traj.states[:-1])
        a.extend(traj.actions[:-1])
        s2.extend(traj.states[1:])
        a2.extend(traj.actions[1:])
    return tuple(np.asarray(v, dtype=int) for v in (s, a, s2, a2))


def accumulate(
    D: DemonstrationSet, maps: FeatureMaps, gamma: float, serial: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Sum the LSTDQ matrices A and Z over consecutive pairs of every trajectory.

    ``A = sum phi_t (phi_t - gamma * phi_{t+1})^T`` and ``Z = sum phi_t r_t^T``
    with ``phi = g_Q`` and ``r = g_R``. Length-1 trajectories carry no
    transition and are skipped (with a warning); a non-empty set made only of
    them is an error. ``serial`` accumulates trajectory by trajectory in
    order instead of one stacked product.
    """
    if not 0.0 < gamma <= 1.0:
        raise ParameterError("gamma must lie in (0, 1]")
    short = sum(len(t) < 2 for t in D)
    if len(D) and short == len(D):
        raise DomainError("LSTDQ needs at least one trajectory with two or more steps")
    if short:
        warnings.warn(f"{short} length-1 trajectories skipped by LSTDQ", stacklevel=2)
    A = np.zeros((maps.m_Q, maps.m_Q))
    Z = np.zeros((maps.m_Q, maps.m_R))
    if serial:
        for traj in D:
            if len(traj) < 2:
                continue
            s, a = np.asarray(traj.states), np.asarray(traj.actions)
            phi = maps.q_table[s[:-1], a[:-1]]
            A += phi.T @ (phi - gamma * maps.q_table[s[1:], a[1:]])
            Z += phi.T @ maps.reward_table[s[:-1], a[:-1]]
        return A, Z
    s, a, s2, a2 = _transition_indices(D)
    if len(s):
        phi = maps.q_table[s, a]
        A += phi.T @ (phi - gamma * maps.q_table[s2, a2])
        Z += phi.T @ maps.reward_table[s, a]
    return A, Z


def default_ridge(A: np.ndarray) -> float:
    return 1e-6 * abs(np.trace(A)) / A.shape[0]


def solve_c(A: np.ndarray, Z: np.ndarray, ridge: float = 0.0) -> tuple[np.ndarray, float]:
    """Solve ``(A + ridge*I) C = Z``; returns C and the Frobenius residual."""
    A = np.asarray(A, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or Z.shape[0] != A.shape[0]:
        raise ParameterError(f"incompatible shapes A{A.shape}, Z{Z.shape}")
    if ridge < 0:
        raise ParameterError("ridge must be non-negative")
    M = A + ridge * np.eye(A.shape[0])
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError(
            f"LSTDQ system is numerically singular (condition {cond:.3g}); "
            "use a larger ridge or more demonstrations"
        )
    C = np.linalg.solve(M, Z)
    return C, float(np.linalg.norm(M @ C - Z))


def fit_lstdq(
    D: DemonstrationSet, maps: FeatureMaps, gamma: float, ridge: Optional[float] = None, serial: bool = False
) -> LstdqMatrices:
    A, Z = accumulate(D, maps, gamma, serial=serial)
    lam = default_ridge(A) if ridge is None else ridge
    C, res = solve_c(A, Z, lam)
    return LstdqMatrices(A, Z, C, lam, gamma, res)


def q_hat(w_R: np.ndarray, C: np.ndarray, s: int, a: int, maps: FeatureMaps) -> float:
    w_R = np.asarray(getattr(w_R, "w_R", w_R), dtype=float)
    if C.shape != (maps.m_Q, len(w_R)):
        raise ParameterError(f"C has shape {C.shape}, expected {(maps.m_Q, len(w_R))}")
    return float(maps.g_Q(s, a) @ (C @ w_R))
