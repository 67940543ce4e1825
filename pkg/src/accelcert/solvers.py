"""Gradient descent, NAG, NAG-sc and APG with full trajectory recording."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DivergenceError, ParameterDomainError
from .problems import CompositeOracle, SmoothOracle, gradient_mapping
from .schedules import RateParams, nag_sc_beta, nag_sc_t

METHODS = ("gd", "nag", "nag_sc", "apg")

# Above this many iterations only the last iterates are kept by default.
STREAMING_THRESHOLD = 100_000


@dataclass
class IterState:
    """Iterates entering step ``k``: ``x_k``, ``x_{k-1}`` and ``y_k``."""

    k: int
    x: np.ndarray
    x_prev: np.ndarray
    y: np.ndarray


@dataclass
class RunTrace:
    """Complete record of one solver run.

    Row ``k`` of ``x`` and ``y`` holds ``x_k`` and ``y_k`` for ``k = 0..K``.
    ``x_{-1}`` is never stored: by convention it equals ``x_0``.
    ``t_values[k]`` is ``t_{k+1}`` (the weight used by the energy at ``k``)
    and ``beta_values[k]`` is ``beta_k`` (the weight that produced ``y_k``).
    In streaming mode ``x`` and ``y`` are ``None`` and only the last two
    iterates are retained.
    """

    method: str
    params: RateParams
    problem: object
    schedule: object
    x: Optional[np.ndarray]
    y: Optional[np.ndarray]
    map_norms: np.ndarray
    gaps: np.ndarray
    t_values: np.ndarray
    beta_values: np.ndarray
    last_x: np.ndarray
    last_x_prev: np.ndarray
    last_y: np.ndarray
    x_minus_one_is_x0: bool = True

    @property
    def K(self):
        return self.gaps.size - 1

    @property
    def streaming(self):
        return self.x is None

    def x_prev(self, k):
        """``x_{k-1}`` with the convention ``x_{-1} = x_0``."""
        return self.x[max(k - 1, 0)]


def _check_method(method, problem, params):
    if method not in METHODS:
        raise ParameterDomainError(f"unknown method {method!r}; choose from {METHODS}")
    if method in ("gd", "nag", "nag_sc") and isinstance(problem, CompositeOracle) \
            and problem.g_kind != "zero":
        raise ParameterDomainError(f"{method} needs a smooth problem; use apg")
    if method == "nag_sc" and not (params.mu > 0 and params.L > params.mu):
        raise ParameterDomainError("nag_sc needs both mu > 0 and L > mu")


def _beta_next(method, schedule, params, k):
    """Momentum ``beta_{k+1}`` applied after the gradient step at ``k``."""
    if method == "gd":
        return 0.0
    if method == "nag_sc":
        return nag_sc_beta(params.mu, params.L)
    return schedule.beta(k + 1)


def step(method, problem, schedule, params, state):
    """One iteration: (prox-)gradient step at ``y_k``, then extrapolation."""
    _check_method(method, problem, params)
    s = params.s
    g = gradient_mapping(problem, s, state.y)
    x_new = state.y - s * g
    beta = _beta_next(method, schedule, params, state.k)
    y_new = x_new + beta * (x_new - state.x) if beta != 0.0 else x_new.copy()
    return IterState(state.k + 1, x_new, state.x, y_new)


def default_x0(problem):
    """All-ones direction scaled so that ``||x0 - x_star|| = 10``."""
    n = problem.dim
    return problem.x_star + 10.0 * np.ones(n) / np.sqrt(n)


def run(method, problem, schedule, params, x0=None, K=100, streaming=None):
    """Run ``K`` iterations of ``method`` from ``x0`` and return a :class:`RunTrace`."""
    if K < 1:
        raise ParameterDomainError("K must be >= 1")
    if params.s > (1.0 / problem.L) * (1 + 4e-16):
        raise ParameterDomainError(f"step {params.s} exceeds 1/L = {1.0 / problem.L}")
    _check_method(method, problem, params)
    if method in ("nag", "apg") and schedule is None:
        raise ParameterDomainError(f"{method} needs a schedule")
    if streaming is None:
        streaming = K > STREAMING_THRESHOLD

    x0 = default_x0(problem) if x0 is None else np.asarray(x0, dtype=float).copy()
    n = x0.size
    s = params.s
    f_star = problem.F_star

    if method in ("nag", "apg"):
        t = schedule.t_upto(K + 2)
        t_values = t[1 : K + 2].copy()
        beta_values = schedule.betas_upto(K)
    elif method == "nag_sc":
        t_values = np.full(K + 1, nag_sc_t(params.mu, params.L))
        beta_values = np.full(K + 1, nag_sc_beta(params.mu, params.L))
        beta_values[0] = 0.0
    else:
        t_values = np.full(K + 1, np.nan)
        beta_values = np.zeros(K + 1)

    X = Y = None
    if not streaming:
        X = np.empty((K + 1, n))
        Y = np.empty((K + 1, n))
        X[0] = Y[0] = x0
    gaps = np.empty(K + 1)
    map_norms = np.empty(K + 1)

    x_prev = x0
    x = x0
    y = x0.copy()
    # overflow is reported as a DivergenceError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K + 1):
            g = gradient_mapping(problem, s, y)
            gnorm = float(np.linalg.norm(g))
            gap = float(problem.objective(x)) - f_star
            if not (np.isfinite(gnorm) and np.isfinite(gap)):
                raise DivergenceError(f"non-finite value at iteration {k}", iteration=k)
            map_norms[k] = gnorm
            gaps[k] = gap
            if k == K:
                break
            x_new = y - s * g
            beta = beta_values[k + 1]
            y = x_new + beta * (x_new - x) if beta != 0.0 else x_new.copy()
            x_prev, x = x, x_new
            if not streaming:
                X[k + 1] = x
                Y[k + 1] = y

    return RunTrace(method, params, problem, schedule, X, Y, map_norms, gaps,
                    t_values, beta_values, x.copy(), x_prev.copy(), y.copy())
