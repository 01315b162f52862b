"""L-BFGS maximisation and the LRP / LPO fitting pipelines."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from mapirl.core import DemonstrationSet, FeatureMaps, LegalFn, NumericalError, PolicyTable, QParams, RewardParams
from mapirl.lstdq import fit_lstdq
from mapirl.objectives import ObjectiveEval, StepBatch, compile_steps, separating_direction, softmax_objective

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Union[ObjectiveEval, tuple]]

ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 60
ROUNDOFF = 1e-12  # relative size of rounding error in objective values


@dataclass(frozen=True)
class SolverConfig:
    """L-BFGS settings.

    ``penalty`` adds ``-penalty * ||w||^2`` to the objective. It is off by
    default; with separable demonstrations the unpenalised optimum lies at
    infinity and the solver stops on the iteration cap or a vanishing
    gradient instead.
    """

    gradient_tolerance: float = 1e-6
    max_iterations: int = 500
    history_size: int = 10
    init: Union[str, np.ndarray] = "zeros"
    penalty: float = 0.0

    def __post_init__(self):
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.history_size < 1:
            raise ValueError("history_size must be at least 1")
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")

    def initial_point(self, dim: int) -> np.ndarray:
        if isinstance(self.init, str):
            if self.init != "zeros":
                raise ValueError(f"unknown init {self.init!r}")
            return np.zeros(dim)
        x0 = np.array(self.init, dtype=float).ravel()
        if x0.shape != (dim,):
            raise ValueError(f"init has length {len(x0)}, expected {dim}")
        return x0


@dataclass(frozen=True, eq=False)
class FitResult:
    params: np.ndarray
    objective: float
    gradient_norm: float
    iterations: int
    converged: bool
    message: str = ""


def _evaluate(fun: Objective, x: np.ndarray) -> tuple[float, np.ndarray]:
    out = fun(x)
    if isinstance(out, ObjectiveEval):
        f, g = out.value, out.gradient
    else:
        f, g = out
    g = np.asarray(g, dtype=float)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalError(f"objective is not finite at iterate {x!r}")
    return float(f), g


def _two_loop(g: np.ndarray, history) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if history:
        s, y, _ = history[-1]
        q *= (s @ y) / (y @ y)
    else:
        q *= min(1.0, 1.0 / np.linalg.norm(g))
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _line_search(fun: Objective, x, f, g, d):
    """Backtracking from a unit step; returns ``(x, f, g)`` at the accepted point or None."""
    slope = g @ d
    if not slope > 0:
        return None
    noise = ROUNDOFF * (1.0 + abs(f))
    t = 1.0
    for _ in range(MAX_BACKTRACKS):
        x_new = x + t * d
        f_new, g_new = _evaluate(fun, x_new)
        if f_new >= f + ARMIJO_C1 * t * slope:
            return x_new, f_new, g_new
        # near the optimum f is flat to rounding; fall back on the slope along d
        if f_new >= f - noise and -slope <= 2.0 * (g_new @ d) <= slope:
            return x_new, f_new, g_new
        t *= 0.5
    return None


def maximize(
    fun: Objective,
    config: SolverConfig = SolverConfig(),
    x0: Optional[np.ndarray] = None,
    callback: Optional[Callable[[np.ndarray, float], None]] = None,
    gradient_map: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> FitResult:
    """Maximise a smooth concave function by limited-memory BFGS.

    ``fun(x)`` returns ``(value, gradient)`` or an :class:`ObjectiveEval`.
    Accepted steps satisfy the Armijo sufficient-increase condition or,
    once the increase is lost in rounding, lower the objective by no more
    than its rounding error while at least halving the slope along the
    search direction. Stops once the largest gradient
    component is below ``config.gradient_tolerance``.

    When ``x`` is a change of variables, ``gradient_map`` takes a gradient
    in ``x`` to the original coordinates, where the stopping test and the
    reported gradient norm are then taken.
    """
    native = gradient_map if gradient_map is not None else (lambda g: g)
    if x0 is None:
        if isinstance(config.init, str):
            raise ValueError("x0 is required when config.init is 'zeros' and the dimension is unknown")
        x0 = config.initial_point(len(np.ravel(config.init)))
    x = np.array(x0, dtype=float)
    f, g = _evaluate(fun, x)
    history: deque = deque(maxlen=config.history_size)
    message = "iteration limit reached"
    it = 0
    for it in range(config.max_iterations + 1):
        if np.abs(native(g)).max(initial=0.0) < config.gradient_tolerance:
            message = "gradient below tolerance"
            break
        if it == config.max_iterations:
            break
        step = _line_search(fun, x, f, g, _two_loop(g, history))
        if step is None and history:
            # curvature pairs from nearly flat directions can spoil the
            # quasi-Newton direction; retry along the gradient
            history.clear()
            step = _line_search(fun, x, f, g, _two_loop(g, history))
        if step is None:
            message = "line search could not increase the objective"
            break
        x_new, f_new, g_new = step
        s = x_new - x
        y = g - g_new
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)) and sy > 0:
            history.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(x, f)
    gn = float(np.abs(native(g)).max(initial=0.0))
    converged = gn < config.gradient_tolerance
    log.debug("maximize: %s after %d iterations (|g|=%.3g)", message, it, gn)
    return FitResult(x, f, gn, it, converged, message)


def _penalised(fun: Callable[[np.ndarray], ObjectiveEval], penalty: float) -> Objective:
    if penalty == 0:
        return fun

    def wrapped(w):
        out = fun(w)
        return out.value - penalty * (w @ w), out.gradient - 2 * penalty * w

    return wrapped


def fit_lpo(
    D: Union[DemonstrationSet, StepBatch],
    maps: FeatureMaps,
    beta: float = 1.0,
    config: SolverConfig = SolverConfig(),
    legal_fn: Optional[LegalFn] = None,
) -> tuple[QParams, FitResult]:
    batch = D if isinstance(D, StepBatch) else compile_steps(D, maps, legal_fn)
    if batch.n_steps == 0:
        raise ValueError("cannot fit on an empty demonstration set")
    fun = _penalised(lambda w: softmax_objective(w, batch, beta), config.penalty)
    result = _flag_separable(maximize(fun, config, config.initial_point(maps.m_Q)), batch, None, config)
    return QParams(result.params, beta), result


class LrpFit(NamedTuple):
    w_R: RewardParams
    w_Q: QParams
    C: np.ndarray
    result: FitResult


def fit_lrp(
    D: DemonstrationSet,
    maps: FeatureMaps,
    gamma: float,
    beta: float = 1.0,
    ridge: Optional[float] = None,
    config: SolverConfig = SolverConfig(),
    legal_fn: Optional[LegalFn] = None,
    C: Optional[np.ndarray] = None,
    serial: bool = False,
) -> LrpFit:
    """LSTDQ on ``D`` followed by MAP estimation of the reward weights.

    Passing ``C`` skips the LSTDQ step and uses the given value map.

    The solver works in coordinates ``u`` with ``w_R = T u``, chosen so the
    Hessian at ``w_R = 0`` becomes the identity on its range. Directions
    with no curvature there (features that do not vary across actions,
    duplicated features, the null space of ``C``) never change the
    likelihood and are left unscaled. The optimum is unchanged;
    ``result.params`` holds ``w_R``.
    """
    if len(D) == 0:
        raise ValueError("cannot fit on an empty demonstration set")
    if C is None:
        C = fit_lstdq(D, maps, gamma, ridge, serial=serial).C
    C = np.asarray(C, dtype=float)
    batch = compile_steps(D, maps, legal_fn)

    def objective(w_R):
        inner = softmax_objective(C @ w_R, batch, beta)
        return ObjectiveEval(inner.value, C.T @ inner.gradient)

    T, T_inv_t = _whitening(C.T @ _curvature_at_zero(batch, beta) @ C)
    fun = _penalised(objective, config.penalty)

    def in_u(u):
        f, g = _evaluate(fun, T @ u)
        return f, T.T @ g

    u0 = np.linalg.solve(T, config.initial_point(C.shape[1]))
    res = maximize(in_u, config, u0, gradient_map=lambda g: T_inv_t @ g)
    w_R = T @ res.params
    result = FitResult(w_R, res.objective, res.gradient_norm, res.iterations, res.converged, res.message)
    result = _flag_separable(result, batch, C, config)
    return LrpFit(RewardParams(w_R), QParams(C @ w_R, beta), C, result)


def _flag_separable(result: FitResult, batch: StepBatch, C: Optional[np.ndarray], config: SolverConfig) -> FitResult:
    """Mark unpenalised fits on separable data as not converged; their optimum is at infinity."""
    if config.penalty > 0 or separating_direction(batch, C) is None:
        return result
    message = "demonstrations are separable, the optimum lies at infinity; " + result.message
    return FitResult(result.params, result.objective, result.gradient_norm, result.iterations, False, message)


def _curvature_at_zero(batch: StepBatch, beta: float) -> np.ndarray:
    """Negative Hessian of the LPO objective at ``w_Q = 0`` (uniform softmax)."""
    n = batch.mask.sum(axis=1, keepdims=True)
    mean = np.einsum("nk,nkm->nm", batch.mask, batch.phi_all) / n
    centred = (batch.phi_all - mean[:, None, :]) * batch.mask[:, :, None]
    return beta**2 * np.einsum("n,nkm,nkl->ml", batch.weight / n[:, 0], centred, centred)


def _whitening(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Change of variables ``T`` with ``T.T @ H @ T`` the identity on the range of ``H``, and ``inv(T).T``."""
    lam, V = np.linalg.eigh(H)
    lam = np.clip(lam, 0.0, None)
    scale = np.where(lam > 1e-12 * lam.max(initial=0.0), np.sqrt(lam), 1.0)
    # V is orthogonal, so inv(T).T just inverts the scaling
    return V / scale, V * scale


def greedy_policy(w_Q: Union[QParams, np.ndarray], maps: FeatureMaps, legal_fn: Optional[LegalFn] = None) -> PolicyTable:
    """Deterministic argmax policy over legal actions; ties go to the lowest index."""
    w = np.asarray(getattr(w_Q, "w_Q", w_Q), dtype=float)
    q = maps.q_table @ w
    if legal_fn is not None:
        legal = np.zeros(q.shape, bool)
        for s in range(maps.state_count):
            legal[s, list(legal_fn(s))] = True
    elif maps.legal is not None:
        legal = maps.legal
    else:
        legal = np.ones(q.shape, bool)
    q = np.where(legal, q, -np.inf)
    return PolicyTable.from_actions(np.argmax(q, axis=1), maps.action_count)
