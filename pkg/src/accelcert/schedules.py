"""Extrapolation schedules for Nesterov-type methods.

A schedule is the sequence ``t_1 = 1 < t_2 < t_3 < ...`` from which the
momentum weights ``beta_k = (t_k - 1) / t_{k+1}`` are built.  Two rules are
provided out of the box:

* ``recurrence``: ``t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2``, which makes
  ``t_{k+1}^2 - t_{k+1} = t_k^2`` hold with equality;
* ``linear``: ``t_{k+1} = (k + r) / r`` with ``r >= 2``.

Custom tables are accepted for experimentation.  They are never corrected,
only flagged by :func:`validate_nesterov_rule`.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterDomainError

RULES = ("recurrence", "linear", "custom")

# Relative tolerance for the schedule invariants (double precision).
RTOL = 1e-12


@dataclass(frozen=True)
class RateParams:
    """Strong convexity ``mu``, smoothness ``L`` and step size ``s``.

    ``mu = 0`` is tolerated so that convex-only regression runs can reuse the
    solvers; every certificate routine rejects it.
    """

    mu: float
    L: float
    s: float

    def __post_init__(self):
        if not (self.mu >= 0 and self.L > 0 and self.mu < self.L):
            raise ParameterDomainError(
                f"need 0 < mu < L, got mu={self.mu}, L={self.L}")
        if not (0 < self.s <= (1.0 / self.L) * (1 + 4e-16)):
            raise ParameterDomainError(
                f"need 0 < s <= 1/L = {1.0 / self.L}, got s={self.s}")

    @classmethod
    def from_fraction(cls, mu, L, s_frac):
        """Build params with ``s = s_frac / L``."""
        if not 0 < s_frac <= 1:
            raise ParameterDomainError(f"s_frac must lie in (0, 1], got {s_frac}")
        s = 1.0 / L if s_frac == 1 else s_frac / L
        return cls(float(mu), float(L), s)

    @property
    def kappa(self):
        return self.L / self.mu if self.mu > 0 else math.inf

    @property
    def fixed_step(self):
        """True when ``s`` equals ``1/L`` up to rounding."""
        return abs(self.s * self.L - 1.0) <= 4e-16

    @property
    def subcritical(self):
        return not self.fixed_step


class Schedule:
    """Lazily materialised, append-only sequence ``t_1, t_2, ...``.

    Reads of already materialised entries never block; extension of the
    cache is serialised by a lock, so concurrent readers always observe a
    consistent prefix.
    """

    def __init__(self, rule, r=None, table=None):
        if rule not in RULES:
            raise ParameterDomainError(f"unknown schedule rule {rule!r}")
        self.rule = rule
        self.r = None
        self._lock = threading.Lock()
        if rule == "linear":
            r = 2.0 if r is None else float(r)
            if not r >= 2:
                raise ParameterDomainError(f"linear rule needs r >= 2, got r={r}")
            self.r = r
        if rule == "custom":
            if table is None or len(table) == 0:
                raise ParameterDomainError("custom rule needs a non-empty table")
            buf = np.asarray(table, dtype=float).copy()
            self._buf = buf
            self._n = buf.size
        else:
            self._buf = np.empty(64)
            self._buf[0] = 1.0
            self._n = 1

    def __repr__(self):
        if self.rule == "linear":
            return f"Schedule('linear', r={self.r:g})"
        return f"Schedule({self.rule!r})"

    @property
    def key(self):
        """Hashable identity of the rule (used for memoisation)."""
        if self.rule == "custom":
            return ("custom", tuple(self._buf[: self._n].tolist()))
        return (self.rule, self.r)

    @property
    def flagged(self):
        """Custom tables are always flagged as unverified input."""
        return self.rule == "custom"

    @property
    def size(self):
        """Number of materialised entries."""
        return self._n

    def _extend(self, n):
        with self._lock:
            m = self._n
            if m >= n:
                return
            if self.rule == "custom":
                raise IndexError(
                    f"custom schedule has {m} entries, t_{n} requested")
            cap = self._buf.size
            buf = self._buf
            if cap < n:
                while cap < n:
                    cap *= 2
                buf = np.empty(cap)
                buf[:m] = self._buf[:m]
            if self.rule == "linear":
                # entry j (0-based) holds t_{j+1} = (j + r) / r
                j = np.arange(m, n, dtype=float)
                buf[m:n] = (j + self.r) / self.r
            else:
                t = float(buf[m - 1])
                sqrt = math.sqrt
                for j in range(m, n):
                    t = (1.0 + sqrt(1.0 + 4.0 * t * t)) / 2.0
                    buf[j] = t
            # publish the buffer before the length so readers see a full prefix
            self._buf = buf
            self._n = n

    def t(self, k):
        """Return ``t_k`` for ``k >= 1``."""
        k = int(k)
        if k < 1:
            raise IndexError(f"t_k is defined for k >= 1, got k={k}")
        if k > self._n:
            self._extend(k)
        return float(self._buf[k - 1])

    def beta(self, k):
        """Return ``beta_k = (t_k - 1) / t_{k+1}``; ``beta_0 = 0``."""
        k = int(k)
        if k == 0:
            return 0.0
        return (self.t(k) - 1.0) / self.t(k + 1)

    def t_upto(self, n):
        """Array ``a`` of length ``n + 1`` with ``a[k] = t_k`` and ``a[0] = nan``."""
        if n > self._n:
            self._extend(n)
        out = np.empty(n + 1)
        out[0] = np.nan
        out[1:] = self._buf[:n]
        return out

    def betas_upto(self, n):
        """Array ``b`` of length ``n + 1`` with ``b[k] = beta_k``."""
        t = self.t_upto(n + 1)
        out = np.empty(n + 1)
        out[0] = 0.0
        out[1:] = (t[1 : n + 1] - 1.0) / t[2 : n + 2]
        return out


def make_schedule(rule, r=None, table=None):
    """Create a schedule for ``rule`` in ``{"recurrence", "linear", "custom"}``."""
    return Schedule(rule, r=r, table=table)


def t_at(schedule, k):
    return schedule.t(k)


def beta_at(schedule, k):
    return schedule.beta(k)


def nag_sc_beta(mu, L):
    """Constant momentum ``(sqrt(L) - sqrt(mu)) / (sqrt(L) + sqrt(mu))``."""
    if not 0 < mu < L:
        raise ParameterDomainError(f"need 0 < mu < L, got mu={mu}, L={L}")
    sl, sm = math.sqrt(L), math.sqrt(mu)
    return (sl - sm) / (sl + sm)


def nag_sc_t(mu, L):
    """Constant ``t`` paired with :func:`nag_sc_beta`."""
    if not 0 < mu < L:
        raise ParameterDomainError(f"need 0 < mu < L, got mu={mu}, L={L}")
    return (math.sqrt(L) + math.sqrt(mu)) / (2.0 * math.sqrt(mu))


@dataclass
class ValidationReport:
    """Per-``k`` outcome of the schedule checks for ``k = 1..horizon``.

    Each boolean array is indexed so that entry ``k - 1`` refers to ``k``.
    """

    horizon: int
    t1_is_one: bool
    increasing: np.ndarray
    nesterov: np.ndarray
    gap: np.ndarray
    beta_interval: np.ndarray
    max_nesterov_excess: float
    flagged: bool = False
    notes: list = field(default_factory=list)

    CHECKS = ("increasing", "nesterov", "gap", "beta_interval")

    @property
    def passed(self):
        return self.t1_is_one and all(bool(getattr(self, c).all()) for c in self.CHECKS)

    def failures(self):
        """List of ``(k, check)`` pairs that failed, in increasing ``k``."""
        out = [] if self.t1_is_one else [(1, "t1_is_one")]
        for c in self.CHECKS:
            bad = np.flatnonzero(~getattr(self, c)) + 1
            out.extend((int(k), c) for k in bad)
        return sorted(out)


def validate_nesterov_rule(schedule, horizon):
    """Check the Nesterov-rule invariants of ``schedule`` for ``k <= horizon``.

    Violations are reported, never raised.  For custom tables the horizon is
    clamped to the table length minus one and the clamp is noted.
    """
    if horizon < 2:
        raise ParameterDomainError(f"horizon must be >= 2, got {horizon}")
    notes = []
    if schedule.rule == "custom" and horizon + 1 > schedule.size:
        notes.append(f"horizon clamped from {horizon} to {schedule.size - 1}")
        horizon = schedule.size - 1
    t = schedule.t_upto(horizon + 1)
    tk, tk1 = t[1 : horizon + 1], t[2 : horizon + 2]
    diff = tk1 - tk
    excess = (tk1 * tk1 - tk1 - tk * tk) / (tk * tk)
    # the betas the solvers consume, checked against the interval endpoints
    beta = schedule.betas_upto(horizon)[1:]
    lo = (tk - 1.0) / tk1
    hi = (tk1 - 1.0) / tk1
    return ValidationReport(
        horizon=horizon,
        t1_is_one=bool(t[1] == 1.0),
        increasing=tk1 > tk,
        nesterov=excess <= RTOL,
        gap=(diff > 0) & (diff < 1),
        beta_interval=(beta >= lo * (1 - RTOL)) & (beta <= hi * (1 + RTOL)),
        max_nesterov_excess=float(np.max(excess)),
        flagged=schedule.flagged,
        notes=notes,
    )
