"""Strongly convex test problems with exact constants and reference optima.

Every oracle evaluates on a single point ``x`` of shape ``(n,)`` or on a
stack of points of shape ``(m, n)`` (rows), which keeps the sampled
property checks vectorised.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .exceptions import (ParameterDomainError, ReferenceSolveError,
                         UnsupportedOperationError)

REF_RTOL = 1e-13
REF_MAX_ITER = 10_000_000


@dataclass(frozen=True)
class SmoothOracle:
    """Smooth objective ``f`` with moduli ``mu <= L`` and a stored optimum.

    ``ref_residual`` is the gradient norm achieved by the reference solve
    (zero for analytic optima) and ``f_star_tol`` bounds ``f(x_star) - f*``.
    """

    value: Callable
    gradient: Callable
    mu: float
    L: float
    x_star: Optional[np.ndarray]
    f_star: Optional[float]
    dim: int
    name: str = "smooth"
    ref_residual: float = 0.0
    f_star_tol: float = 0.0

    @property
    def kappa(self):
        return self.L / self.mu if self.mu > 0 else np.inf

    # the composite interface, with g = 0
    def objective(self, x):
        return self.value(x)

    @property
    def smooth(self):
        return self

    @property
    def F_star(self):
        return self.f_star


def _prox_zero(weight, s, y):
    return np.array(y, dtype=float, copy=True)


def _prox_l1(weight, s, y):
    y = np.asarray(y, dtype=float)
    thr = s * weight
    return np.sign(y) * np.maximum(np.abs(y) - thr, 0.0)


def _prox_nonneg(weight, s, y):
    return np.maximum(np.asarray(y, dtype=float), 0.0)


def _g_zero(weight, x):
    return np.zeros(np.shape(x)[:-1]) if np.ndim(x) > 1 else 0.0


def _g_l1(weight, x):
    return weight * np.sum(np.abs(x), axis=-1)


def _g_nonneg(weight, x):
    x = np.asarray(x)
    inside = np.all(x >= 0, axis=-1)
    return np.where(inside, 0.0, np.inf) if x.ndim > 1 else (0.0 if inside else np.inf)


# kind -> (value, prox)
_NONSMOOTH = {
    "zero": (_g_zero, _prox_zero),
    "l1": (_g_l1, _prox_l1),
    "nonneg": (_g_nonneg, _prox_nonneg),
}


@dataclass(frozen=True)
class CompositeOracle:
    """``F = f + g`` with ``f`` smooth and ``g`` one of the supported kinds."""

    smooth: SmoothOracle
    g_kind: str
    g_weight: float
    x_star: Optional[np.ndarray]
    F_star: Optional[float]
    name: str = "composite"
    ref_residual: float = 0.0
    f_star_tol: float = 0.0

    @property
    def mu(self):
        return self.smooth.mu

    @property
    def L(self):
        return self.smooth.L

    @property
    def dim(self):
        return self.smooth.dim

    @property
    def kappa(self):
        return self.smooth.kappa

    def nonsmooth_value(self, x):
        try:
            g, _ = _NONSMOOTH[self.g_kind]
        except KeyError:
            raise UnsupportedOperationError(f"no value rule for g={self.g_kind!r}") from None
        return g(self.g_weight, x)

    def prox(self, s, y):
        return prox_apply(self, s, y)

    def objective(self, x):
        return self.smooth.value(x) + self.nonsmooth_value(x)


def prox_apply(oracle, s, y):
    """Closed-form ``argmin_x g(x) + ||x - y||^2 / (2 s)``."""
    if not s > 0:
        raise ParameterDomainError(f"prox scale must be positive, got {s}")
    try:
        _, prox = _NONSMOOTH[oracle.g_kind]
    except KeyError:
        raise UnsupportedOperationError(f"no closed-form prox for g={oracle.g_kind!r}") from None
    return prox(oracle.g_weight, s, y)


def gradient_mapping(problem, s, y):
    """``G_s(y) = (y - prox_{sg}(y - s grad f(y))) / s``.

    Returns ``grad f(y)`` itself, bit for bit, when ``g = 0``.
    """
    if not s > 0:
        raise ParameterDomainError(f"step must be positive, got {s}")
    if isinstance(problem, SmoothOracle) or problem.g_kind == "zero":
        return problem.smooth.gradient(y)
    grad = problem.smooth.gradient(y)
    p = prox_apply(problem, s, y - s * grad)
    return (y - p) / s


def _spectral_extremes(A):
    # eigvalsh of the Gram matrix; dimensions are desk scale (<= 1e3)
    ev = np.linalg.eigvalsh(A.T @ A)
    return max(float(ev[0]), 0.0), float(ev[-1])


def quadratic_problem(diag, b, allow_singular=False):
    """``f(x) = 0.5 * sum(d_i x_i^2) - b^T x`` with ``mu = min d``, ``L = max d``.

    With ``allow_singular=True`` zero curvatures are accepted (``mu = 0``);
    the matching entries of ``b`` must vanish and ``x_star`` is taken as the
    minimum-norm minimiser.
    """
    d = np.asarray(diag, dtype=float)
    b = np.asarray(b, dtype=float)
    if d.ndim != 1 or b.shape != d.shape:
        raise ParameterDomainError("diag and b must be vectors of equal length")
    mu, L = float(d.min()), float(d.max())
    if allow_singular:
        if mu < 0:
            raise ParameterDomainError("curvatures must be nonnegative")
        if np.any(b[d == 0] != 0):
            raise ParameterDomainError("b must vanish where the curvature is zero")
    elif not mu > 0:
        raise ParameterDomainError("all diagonal entries must be positive")
    if not mu < L:
        raise ParameterDomainError("uniform diagonal: need L > mu")

    nz = d > 0
    x_star = np.zeros_like(d)
    x_star[nz] = b[nz] / d[nz]
    f_star = float(-0.5 * np.sum(b[nz] ** 2 / d[nz]))

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(d * x * x, axis=-1) - x @ b

    def gradient(x):
        return d * np.asarray(x, dtype=float) - b

    return SmoothOracle(value, gradient, mu, L, x_star, f_star, d.size,
                        name="quadratic")


def logistic_problem(features, labels, mu_reg):
    """Ridge-regularised logistic loss; the optimum is found by a reference solve.

    ``L = mu_reg + sigma_max(A)^2 / (4 m)`` bounds the Hessian since the
    logistic curvature never exceeds 1/4.
    """
    A = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=float).ravel()
    if A.size == 0 or y.size == 0:
        raise ParameterDomainError("empty data")
    if A.shape[0] != y.size:
        raise ParameterDomainError("features and labels disagree in length")
    if not np.all(np.abs(y) == 1):
        raise ParameterDomainError("labels must be +1 or -1")
    if not mu_reg > 0:
        raise ParameterDomainError("mu_reg must be positive")
    m, n = A.shape
    _, smax = _spectral_extremes(A)
    L = mu_reg + smax / (4.0 * m)
    yA = y[:, None] * A

    def value(x):
        z = np.asarray(x, dtype=float) @ yA.T
        return np.mean(np.logaddexp(0.0, -z), axis=-1) + 0.5 * mu_reg * np.sum(x * x, axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        z = x @ yA.T
        return -(expit(-z) @ yA) / m + mu_reg * x

    oracle = SmoothOracle(value, gradient, float(mu_reg), float(L), None, None, n,
                          name="logistic")
    x_star, _ = reference_optimum(oracle)
    return oracle_with_reference(oracle, x_star)


def composite_problem(smooth, g_kind="l1", weight=1.0):
    """Attach a supported nonsmooth term to ``smooth`` and solve for the optimum."""
    if g_kind not in _NONSMOOTH:
        raise UnsupportedOperationError(f"unsupported nonsmooth term {g_kind!r}")
    if weight < 0:
        raise ParameterDomainError("weight must be nonnegative")
    oracle = CompositeOracle(smooth, g_kind, float(weight), None, None,
                             name=f"{smooth.name}+{g_kind}")
    if g_kind == "zero" or (g_kind == "l1" and weight == 0):
        if smooth.x_star is not None:
            return replace(oracle, x_star=smooth.x_star, F_star=smooth.f_star,
                           ref_residual=smooth.ref_residual,
                           f_star_tol=smooth.f_star_tol)
    x_star, _ = reference_optimum(oracle)
    return oracle_with_reference(oracle, x_star)


def composite_lasso(A, b, mu_reg, l1):
    """``0.5 ||Ax - b||^2 + 0.5 mu_reg ||x||^2 + l1 ||x||_1``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if not mu_reg > 0:
        raise ParameterDomainError("mu_reg must be positive")
    if l1 < 0:
        raise ParameterDomainError("l1 must be nonnegative")
    smin, smax = _spectral_extremes(A)
    n = A.shape[1]
    Atb = A.T @ b

    def value(x):
        x = np.asarray(x, dtype=float)
        r = x @ A.T - b
        return 0.5 * np.sum(r * r, axis=-1) + 0.5 * mu_reg * np.sum(x * x, axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return (x @ A.T - b) @ A + mu_reg * x

    smooth = SmoothOracle(value, gradient, mu_reg + smin, mu_reg + smax, None, None, n,
                          name="ridge")
    if l1 == 0:
        # normal equations
        x_star = np.linalg.solve(A.T @ A + mu_reg * np.eye(n), Atb)
        smooth = replace(smooth, x_star=x_star, f_star=float(value(x_star)))
        return composite_problem(smooth, "l1", 0.0)
    oracle = composite_problem(smooth, "l1", l1)
    return replace(oracle, name="lasso")


def oracle_with_reference(oracle, x_star):
    """Return a copy of ``oracle`` that stores ``x_star`` and its optimal value."""
    s = 1.0 / oracle.L
    res = float(np.linalg.norm(gradient_mapping(oracle, s, x_star)))
    # F(x) - F* <= ||G_s(x)||^2 / (2 mu) after a prox-gradient step
    tol = res * res / (2.0 * oracle.mu) if oracle.mu > 0 else np.inf
    val = float(oracle.objective(x_star))
    if isinstance(oracle, SmoothOracle):
        return replace(oracle, x_star=x_star, f_star=val, ref_residual=res, f_star_tol=tol)
    return replace(oracle, x_star=x_star, F_star=val, ref_residual=res, f_star_tol=tol)


def reference_optimum(problem, rtol=REF_RTOL, max_iter=REF_MAX_ITER):
    """Return ``(x_star, f_star)``; solve for it if the oracle does not store it.

    The solve is the plain prox-gradient iteration at ``s = 1/L`` (no
    extrapolation), stopped once ``||G_s(x)|| <= rtol * L * (1 + ||x||)``.
    It is monotone and shares no code path with the accelerated solvers.
    """
    stored = problem.f_star if isinstance(problem, SmoothOracle) else problem.F_star
    if problem.x_star is not None and stored is not None:
        return problem.x_star, stored

    L = problem.L
    s = 1.0 / L
    x = np.zeros(problem.dim)
    best = np.inf
    stall = 0
    patience = max(1000, int(50 * problem.kappa))
    for it in range(max_iter):
        G = gradient_mapping(problem, s, x)
        res = float(np.linalg.norm(G))
        if not np.isfinite(res):
            raise ReferenceSolveError(f"non-finite residual at iteration {it}", res)
        x_new = x - s * G
        if res <= rtol * L * (1.0 + np.linalg.norm(x)):
            x = x_new
            break
        if res < 0.999 * best:
            best, stall = res, 0
        else:
            stall += 1
            if stall > patience:
                raise ReferenceSolveError(
                    f"reference solve stalled at residual {res:.3e} "
                    f"(target {rtol * L * (1.0 + np.linalg.norm(x)):.3e})", res)
        x = x_new
    else:
        raise ReferenceSolveError(f"reference solve hit {max_iter} iterations", res)
    return x, float(problem.objective(x))
