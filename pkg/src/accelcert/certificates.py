"""Explicit linear-rate certificates for NAG and APG.

For a step ``s < 1/L`` the contraction factor at iteration ``k`` is
``rho_k = 1 - 1 / min(C_k, D_k)`` where ``C_k`` and ``D_k`` are infima of
piecewise-max functions of two and three positive witnesses.  Both infima
are computed here, vectorised over ``k``:

* ``C_k = E(t_{k+1}) / (mu s)``; for ``t > 1`` the minimiser is the unique
  point where the three pieces coincide.  Eliminating the witnesses leaves a
  scalar equation in the common value ``E`` that is strictly monotone, so it
  is solved by bisection.
* ``D_k``: for a candidate max-value ``m`` the three piece constraints read
  ``u + 1/v <= A``, ``v + w <= B``, ``1/u + 1/w <= G``.  Taking ``u`` and
  ``w`` as large as allowed leaves the convex function
  ``h(v) = 1/(A - 1/v) + 1/(B - v)`` whose minimiser is
  ``v* = (B + 1)/(A + 1)`` with ``h(v*) = (A + B + 2)/(A B - 1)``.
  Feasibility is monotone in ``m``, so ``m`` is bisected.

For ``s = 1/L`` a single constant ``rho`` is available (see
:func:`rho_fixed`).
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import CertificateSolveError, ParameterDomainError
from .schedules import RateParams

_MAX_BISECT = 200
# any positive witness is valid; boundary witnesses (0 or inf) are replaced
# by these finite stand-ins when a bound must actually be evaluated
_FINITE_SMALL = 1e-12
_FINITE_LARGE = 1e12


def _check_subcritical(params):
    if not params.mu > 0:
        raise ParameterDomainError("certificates need mu > 0")
    if not params.s * params.L < 1:
        raise ParameterDomainError(
            f"certificate needs s < 1/L (got sL = {params.s * params.L}); "
            "use rho_fixed for s = 1/L")


# ---------------------------------------------------------------- C_k ----

def c_value(t, a, b, params):
    """``C_k(a, b)`` with ``t_{k+1}`` replaced by ``t``."""
    _check_subcritical(params)
    mu, L, s = params.mu, params.L, params.s
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ParameterDomainError("t must be >= 1")
    c = 1.0 - s * L
    p1 = (t - 1.0) * (1.0 + mu / a) / (t * c)
    p2 = (1.0 + b) * (t - 1.0) / t + s * (a + L)
    p3 = (1.0 + 1.0 / b) / t
    out = np.maximum(np.maximum(p1, p2), p3) / (mu * s)
    return float(out) if out.ndim == 0 else out


def _c_witness(t, E, mu, c):
    a = mu / (t * c * E / (t - 1.0) - 1.0)
    b = 1.0 / (t * E - 1.0)
    return a, b


def c_inf_many(t, params):
    """Vectorised ``C`` infimum at each entry of ``t``.

    Returns ``(C, a, b, boundary)``; at ``t = 1`` the infimum is not attained
    (``a -> 0``, ``b -> inf``) and ``boundary`` is set.
    """
    _check_subcritical(params)
    mu, L, s = params.mu, params.L, params.s
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 1):
        raise ParameterDomainError("t must be >= 1")
    c = 1.0 - s * L
    E = np.ones_like(t)
    a = np.zeros_like(t)
    b = np.full_like(t, np.inf)
    inner = t > 1
    tt = t[inner]
    if tt.size:
        lo = np.maximum(1.0, (tt - 1.0) / (tt * c))
        hi = np.full_like(tt, 3.0 / c)

        def excess(e):
            with np.errstate(divide="ignore", invalid="ignore"):
                aa, bb = _c_witness(tt, e, mu, c)
                val = (1.0 + bb) * (tt - 1.0) / tt + s * (aa + L) - e
            # at the lower end a (or b) blows up; the excess is then +inf
            return np.where((aa > 0) & (bb > 0), val, np.inf)

        if np.any(excess(hi) > 0):
            raise CertificateSolveError("C infimum not bracketed by 3/(1-sL)")
        for _ in range(_MAX_BISECT):
            mid = 0.5 * (lo + hi)
            pos = excess(mid) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
            if np.all(hi - lo <= 4e-16 * hi):
                break
        E[inner] = hi
        a[inner], b[inner] = _c_witness(tt, hi, mu, c)
    return E / (mu * s), a, b, ~inner


class CInfimum(NamedTuple):
    C: float
    a: float
    b: float
    boundary: bool


def c_inf_at(t, params):
    """``C`` infimum at a single ``t >= 1`` with its witness ``(a, b)``."""
    C, a, b, bd = c_inf_many([t], params)
    return CInfimum(float(C[0]), float(a[0]), float(b[0]), bool(bd[0]))


def e_value(t, params):
    """``E(t) = mu s C``: the scale-free form of the ``C`` infimum."""
    C, _, _, _ = c_inf_many(t, params)
    return C * params.mu * params.s


def a_limit(params):
    """Optimal ``a`` in the ``t -> inf`` limit problem."""
    _check_subcritical(params)
    mu, L, s = params.mu, params.L, params.s
    Ls = L * s
    return (Ls ** 2 + math.sqrt(Ls ** 4 + 4 * (1 - Ls) * mu * s)) / (2 * s * (1 - Ls))


def c_limit(params):
    """``C_inf``, the limit of the nondecreasing sequence ``C_k``."""
    _check_subcritical(params)
    mu, L, s = params.mu, params.L, params.s
    Ls = L * s
    return (1 + Ls) / (mu * s) + \
        (Ls ** 2 + math.sqrt(Ls ** 4 + 4 * (1 - Ls) * mu * s)) / (2 * (1 - Ls) * mu * s)


# ---------------------------------------------------------------- D_k ----

def _d_coeffs(t1, t2, params):
    mu, L, s = params.mu, params.L, params.s
    cinv = 1.0 / (1.0 - s * L)
    P = (t2 - 1.0) * t2 / (t1 * t1) * cinv * (1.0 / (s * mu) - 2.0 + L * s)
    alpha = (t1 - 1.0) / (mu * s * t1)
    gamma = 1.0 / (mu * s * t1)
    return P, cinv, alpha, gamma


def d_value(t1, t2, u, v, w, params):
    """``D_k(u, v, w)`` with ``t_{k+1} = t1`` and ``t_{k+2} = t2``."""
    _check_subcritical(params)
    P, cinv, alpha, gamma = _d_coeffs(np.asarray(t1, float), np.asarray(t2, float), params)
    T1 = P + cinv * (1.0 + u + 1.0 / v)
    T2 = alpha * (1.0 + v + w)
    T3 = gamma * (1.0 + 1.0 / w + 1.0 / u)
    out = np.maximum(np.maximum(T1, T2), T3) + 1.0
    return float(out) if np.ndim(out) == 0 else out


def _d_abg(m, P, cinv, alpha, gamma):
    A = (m - P) / cinv - 1.0
    G = m / gamma - 1.0
    with np.errstate(divide="ignore"):
        B = np.where(alpha > 0, m / np.where(alpha > 0, alpha, 1.0) - 1.0, np.inf)
    return A, B, G


def _d_feasible(m, P, cinv, alpha, gamma):
    A, B, G = _d_abg(m, P, cinv, alpha, gamma)
    with np.errstate(invalid="ignore", over="ignore"):
        AB = A * B
        finite = (B > 0) & (AB > 1) & (A + B + 2.0 <= G * (AB - 1.0))
        unbounded = A * G >= 1.0
    return (A > 0) & (G > 0) & np.where(np.isinf(B), unbounded, finite)


def d_inf_many(t1, t2, params):
    """Vectorised ``D`` infimum for pairs ``(t_{k+1}, t_{k+2})``.

    Returns ``(D, u, v, w, boundary)``.  When ``t_{k+1} = 1`` the optimum
    pushes ``v`` and ``w`` to infinity; those entries are flagged.
    """
    _check_subcritical(params)
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    if np.any(t1 < 1) or np.any(t2 <= t1):
        raise ParameterDomainError("need 1 <= t1 < t2")
    P, cinv, alpha, gamma = _d_coeffs(t1, t2, params)
    # (u, v, w) = (1, 1, 1) is always feasible, so its max value bounds m above
    lo = P + cinv
    hi = np.maximum(np.maximum(P + 3.0 * cinv, 3.0 * alpha), 3.0 * gamma) * (1 + 1e-12)
    if not np.all(_d_feasible(hi, P, cinv, alpha, gamma)):
        raise CertificateSolveError("D infimum: upper bracket infeasible")
    if np.any(_d_feasible(lo, P, cinv, alpha, gamma)):
        raise CertificateSolveError("D infimum: lower bracket feasible")
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        ok = _d_feasible(mid, P, cinv, alpha, gamma)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
        if np.all(hi - lo <= 4e-16 * hi):
            break
    A, B, G = _d_abg(hi, P, cinv, alpha, gamma)
    boundary = np.isinf(B)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(boundary, np.inf, (B + 1.0) / (A + 1.0))
        u = np.where(boundary, A, A - 1.0 / v)
        w = np.where(boundary, np.inf, B - v)
    return hi + 1.0, u, v, w, boundary


class DInfimum(NamedTuple):
    D: float
    u: float
    v: float
    w: float
    boundary: bool


def d_inf_at(k, schedule, params):
    """``D_k`` for ``schedule`` with its witness ``(u, v, w)``."""
    if k < 0:
        raise ParameterDomainError("k must be >= 0")
    D, u, v, w, bd = d_inf_many([schedule.t(k + 1)], [schedule.t(k + 2)], params)
    return DInfimum(float(D[0]), float(u[0]), float(v[0]), float(w[0]), bool(bd[0]))


def v_limit(params):
    """Optimal ``v`` of the ``k -> inf`` limit problem for ``D``.

    It is the positive root of
    ``(1 - sL) v^2 - ((L - mu) s + L mu s^2) v - mu s = 0``.
    """
    _check_subcritical(params)
    mu, L, s = params.mu, params.L, params.s
    q = (L - mu) * s + L * mu * s * s
    return (q + math.sqrt(q * q + 4 * (1 - L * s) * mu * s)) / (2 * (1 - L * s))


def d_limit(params):
    """``D_inf``, the limit of ``D_k``."""
    _check_subcritical(params)
    mu, L, s = params.mu, params.L, params.s
    q = (L - mu) * s + L * mu * s * s
    return (1 + mu * s) / (mu * s) + \
        (q + math.sqrt(q * q + 4 * (1 - L * s) * mu * s)) / (2 * (1 - L * s) * mu * s)


def d_sandwich(k, schedule, params):
    """Lower and upper bounds on ``D_k`` that both tend to ``D_inf``.

    Valid for ``k >= 1`` (the upper bound needs ``t_{k+1} > 1``).
    """
    _check_subcritical(params)
    if k < 1:
        raise ParameterDomainError("the D sandwich needs k >= 1")
    mu, L, s = params.mu, params.L, params.s
    t1, t2 = schedule.t(k + 1), schedule.t(k + 2)
    sigma = min((t2 - 1) * t2 / (t1 * t1), (t1 - 1) / t1)
    base = (1 + v_limit(params)) / (mu * s)
    lower = 1 + sigma * base
    upper = 1 + base + 2 / (t1 - 1) * max(1 / (1 - s * L), 1 / (mu * s))
    return lower, upper


# --------------------------------------------------------- the series ----

def _compensated_cumsum(values):
    """Prefix sums ``out[k] = sum(values[:k])`` with Neumaier compensation."""
    out = np.empty(len(values) + 1)
    total = 0.0
    comp = 0.0
    out[0] = 0.0
    for i, x in enumerate(values.tolist()):
        t = total + x
        if abs(total) >= abs(x):
            comp += (total - t) + x
        else:
            comp += (x - t) + total
        total = t
        out[i + 1] = total + comp
    return out


@dataclass
class Witnesses:
    """Per-``k`` witnesses for the ``C`` and ``D`` infima."""

    a: np.ndarray
    b: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def finite(self):
        """Copy with boundary values (0 or inf) replaced by finite stand-ins."""
        def fix(x):
            x = np.where(np.isinf(x), _FINITE_LARGE, x)
            return np.where(x <= 0, _FINITE_SMALL, x)
        return Witnesses(*(fix(getattr(self, f)) for f in "abuvw"))

    def scaled(self, factor):
        return Witnesses(*(getattr(self, f) * factor for f in "abuvw"))


@dataclass
class CertificateSeries:
    """``C_k``, ``D_k`` and ``rho_k`` for ``k = 0..K-1`` plus their limits.

    ``rho_product[k]`` is ``prod_{i<k} rho_i`` for ``k = 0..K``;
    ``log_rho_product`` holds the same in log space (compensated sums).
    ``rho_apg`` uses ``D_k`` alone, as required for the composite method.
    """

    params: RateParams
    schedule: object
    C: np.ndarray
    D: np.ndarray
    witnesses: Witnesses
    c_boundary: np.ndarray
    d_boundary: np.ndarray
    C_inf: float
    D_inf: float
    a_inf: float
    v_inf: float
    rho: np.ndarray = field(init=False)
    rho_apg: np.ndarray = field(init=False)
    log_rho_product: np.ndarray = field(init=False)
    log_rho_apg_product: np.ndarray = field(init=False)

    def __post_init__(self):
        m = np.minimum(self.C, self.D)
        self.rho = 1.0 - 1.0 / m
        self.rho_apg = 1.0 - 1.0 / self.D
        self.log_rho_product = _compensated_cumsum(np.log1p(-1.0 / m))
        self.log_rho_apg_product = _compensated_cumsum(np.log1p(-1.0 / self.D))

    @property
    def K(self):
        return self.C.size

    @property
    def rho_product(self):
        return np.exp(self.log_rho_product)

    @property
    def rho_apg_product(self):
        return np.exp(self.log_rho_apg_product)

    def head(self, K):
        """Series truncated to its first ``K`` entries."""
        if K > self.K:
            raise ValueError(f"series has {self.K} entries, {K} requested")
        wt = self.witnesses
        return CertificateSeries(
            self.params, self.schedule, self.C[:K], self.D[:K],
            Witnesses(wt.a[:K], wt.b[:K], wt.u[:K], wt.v[:K], wt.w[:K]),
            self.c_boundary[:K], self.d_boundary[:K],
            self.C_inf, self.D_inf, self.a_inf, self.v_inf)

    def crossover_index(self):
        """First ``k`` from which ``D_k <= C_k`` holds for the rest of the series.

        Returns ``None`` if the last entry still has ``C_k < D_k``.
        """
        d_wins = self.D <= self.C
        if not d_wins[-1]:
            return None
        bad = np.flatnonzero(~d_wins)
        return 0 if bad.size == 0 else int(bad[-1] + 1)


_memo = {}
_memo_lock = threading.Lock()


def _compute_block(schedule, params, k0, k1):
    t = schedule.t_upto(k1 + 1)
    t1 = t[k0 + 1 : k1 + 1]
    t2 = t[k0 + 2 : k1 + 2]
    C, a, b, cb = c_inf_many(t1, params)
    D, u, v, w, db = d_inf_many(t1, t2, params)
    return C, D, a, b, u, v, w, cb, db


def certificate_series(schedule, params, K):
    """Certificates for ``k = 0..K-1`` (memoised per schedule and params)."""
    _check_subcritical(params)
    if K < 1:
        raise ParameterDomainError("K must be >= 1")
    key = (schedule.key, params)
    with _memo_lock:
        cached = _memo.get(key)
    if cached is not None and cached.K >= K:
        return cached.head(K) if cached.K > K else cached
    k0 = 0 if cached is None else cached.K
    block = _compute_block(schedule, params, k0, K)
    if cached is not None:
        old = (cached.C, cached.D, cached.witnesses.a, cached.witnesses.b,
               cached.witnesses.u, cached.witnesses.v, cached.witnesses.w,
               cached.c_boundary, cached.d_boundary)
        block = tuple(np.concatenate([o, n]) for o, n in zip(old, block))
    C, D, a, b, u, v, w, cb, db = block
    series = CertificateSeries(params, schedule, C, D, Witnesses(a, b, u, v, w), cb, db,
                               c_limit(params), d_limit(params),
                               a_limit(params), v_limit(params))
    with _memo_lock:
        current = _memo.get(key)
        if current is None or current.K < series.K:
            _memo[key] = series
    return series


def rho_at(k, schedule, params):
    """``rho_k = 1 - 1/min(C_k, D_k)``, defined for every ``k >= 0``."""
    return float(certificate_series(schedule, params, k + 1).rho[k])


def rate_bounds(params):
    """Closed-form intervals for ``sup rho_k`` and ``lim rho_k`` and related rates."""
    _check_subcritical(params)
    mu, L, s = params.mu, params.L, params.s
    q = (1 - L * s) * mu * s
    return {
        "rho_bar": (1 - q, 1 - q / (1 + max(mu / L, 1 / 8))),
        "rho_inf": (1 - q, 1 - q / (1 + mu / L)),
        "rho_bar_apg": 1 - q / 3,
        "varrho": 1 / (1 + q / 4),
        "gd": 1 - mu / L,
    }


# ------------------------------------------------------ fixed step ----

def _lambda_parts(mu, L):
    if not 0 < mu < L:
        raise ParameterDomainError(f"need 0 < mu < L, got mu={mu}, L={L}")
    p = (L - mu) / mu * (4 * L - mu)
    q = 2 * L * (2 * L - mu) * (L - mu) / mu
    # tau = L - delta, where delta is the small root of
    # delta^2 - (2L + p) delta + L (2L - mu) = 0
    bb = 2 * L + p
    delta = 2 * L * (2 * L - mu) / (bb + math.sqrt(bb * bb - 4 * L * (2 * L - mu)))
    return p, q, delta


def lambda_of(mu, L):
    """``lambda = 1/tau`` with ``tau`` the positive root of the quadratic

    ``tau^2 + ((L - mu)/mu)(4L - mu) tau - 2L(2L - mu)(L - mu)/mu = 0``.
    """
    _, _, delta = _lambda_parts(mu, L)
    return 1.0 / (L - delta)


def lambda_closed_form(mu, L):
    """The nested-radical expression for ``lambda`` (prone to cancellation)."""
    if not 0 < mu < L:
        raise ParameterDomainError(f"need 0 < mu < L, got mu={mu}, L={L}")
    r = (L - mu) / mu
    return 2.0 / (math.sqrt(r * r * (4 * L - mu) ** 2 + 8 * L * (2 * L - mu) * r)
                  - r * (4 * L - mu))


def lambda_quadratic_residual(tau, mu, L):
    """Relative residual of ``tau`` in the defining quadratic."""
    p, q, _ = _lambda_parts(mu, L)
    return abs(tau * tau + p * tau - q) / (tau * tau + p * tau + q)


def eval_phi_psi(t, mu, L):
    """The two branches whose crossing defines ``lambda``.

    ``phi`` decreases and ``psi`` increases on ``1/L < t < 1/(L - mu)``.
    """
    if not 0 < mu < L:
        raise ParameterDomainError(f"need 0 < mu < L, got mu={mu}, L={L}")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 1 / L) or np.any(t >= 1 / (L - mu)):
        raise ParameterDomainError("t must lie in (1/L, 1/(L - mu))")
    phi = 2.0 / (L * t - 1.0) * (L * t + 0.5 * mu / (L - mu))
    psi = 2.0 * L * t / (1.0 - (L - mu) * t)
    if phi.ndim == 0:
        return float(phi), float(psi)
    return phi, psi


@dataclass(frozen=True)
class FixedStepCertificate:
    """``lambda``, ``theta`` and ``rho`` for NAG/APG run at ``s = 1/L``."""

    lam: float
    theta: float
    rho: float
    mu: float
    L: float

    @property
    def common_value(self):
        """``phi(lambda) = psi(lambda)``."""
        return self.theta * self.mu / (self.L - self.mu)

    @property
    def rho_upper(self):
        mu, L = self.mu, self.L
        return (4 * L * L - 3 * L * mu) / (4 * L * L - 3 * L * mu + mu * mu)

    @property
    def lambda_interval(self):
        mu, L = self.mu, self.L
        return 1 / (L - mu / 2), 1 / (L - (2 * L - mu) * mu / (4 * L - 3 * mu))

    @property
    def theta_plus_one_interval(self):
        mu, L = self.mu, self.L
        return (2 * L - mu) ** 2 / mu ** 2, (4 * L * L - 3 * L * mu + mu * mu) / mu ** 2

    @property
    def common_value_interval(self):
        mu, L = self.mu, self.L
        return 4 * L / mu, 4 * L / mu + L / (L - mu)


def rho_fixed(mu, L):
    """Fixed-step certificate for ``s = 1/L``."""
    _, _, delta = _lambda_parts(mu, L)
    tau = L - delta
    lam = 1.0 / tau
    # 2 L lam / (1 - lam (L - mu)) == 2 L / (mu - delta), free of cancellation
    theta = (L - mu) / mu * 2.0 * L / (mu - delta)
    return FixedStepCertificate(lam, theta, theta / (theta + 1.0), float(mu), float(L))


# ------------------------------------------------------ comparisons ----

@dataclass
class ComparisonRates:
    """k-step decreasing ratios for ``k = 0..K`` in log space.

    Entry 0 of ``log_nag`` is ``+inf`` (the NAG ratio is undefined at k=0).
    """

    k: np.ndarray
    log_nag: np.ndarray
    log_gd_half: np.ndarray
    log_gd_full: np.ndarray
    log_nag_sc: np.ndarray
    constants: dict

    def ratio(self, name):
        return np.exp(getattr(self, "log_" + name))


def comparison_rates(params, K, schedule):
    """NAG, GD (s = 1/2L and 1/L) and NAG-sc ratios for ``k = 0..K``.

    The NAG ratio at ``k`` is ``2 prod_{i<k} rho_i / ((t_{k+1} - 1) t_{k+1})``.
    """
    if K < 1:
        raise ParameterDomainError("K must be >= 1")
    series = certificate_series(schedule, params, K)
    mu, L = params.mu, params.L
    k = np.arange(K + 1)
    t = schedule.t_upto(K + 1)[1:]
    with np.errstate(divide="ignore"):
        log_nag = math.log(2.0) + series.log_rho_product - np.log((t - 1.0) * t)
    log_nag[0] = np.inf
    constants = dict(rate_bounds(params))
    constants["nag_sc"] = 1 - math.sqrt(mu / L)
    return ComparisonRates(
        k, log_nag,
        k * math.log1p(-mu / (2 * L)),
        k * math.log1p(-mu / L),
        k * math.log1p(-math.sqrt(mu / L)),
        constants)
