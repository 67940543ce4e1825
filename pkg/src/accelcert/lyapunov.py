"""Lyapunov energies along recorded runs and audits of the inequalities they obey.

Two energies are supported:

* ``general`` (``s < 1/L``, also the convex case ``mu = 0``)::

      E_k = s (t_{k+1} - 1) t_{k+1} gap_k + 0.5 ||(t_{k+1} - 1)(y_k - x_k) + (y_k - x*)||^2

* ``fixed`` (``s = 1/L``)::

      E_k = lambda gap_k + 0.5 ||x_k - x_{k-1}||^2      (x_{-1} = x_0)

Everything is recomputed from the stored iterates and the problem oracle; no
solver-side accumulator is trusted.  Every audit returns an
:class:`AuditReport` whose entries carry ``residual = lhs - rhs`` and the
slack the residual is compared against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certificates import CertificateSeries, FixedStepCertificate
from .exceptions import AuditSetupError
from .problems import gradient_mapping

SLACK_REL = 1e-9
MIXED_RTOL = 1e-8
_EPS = np.finfo(float).eps


@dataclass
class EnergyTrace:
    """Per-``k`` energies for ``k = 0..K``.

    ``potential`` and ``mixed`` are filled for the general kind, ``kinetic``
    for the fixed kind.  ``mixed_vectors`` holds the vector whose half squared
    norm is the mixed energy.
    """

    kind: str
    E: np.ndarray
    potential: np.ndarray | None = None
    mixed: np.ndarray | None = None
    kinetic: np.ndarray | None = None
    mixed_vectors: np.ndarray | None = None
    gaps: np.ndarray | None = None
    ref_tol: float = 0.0


@dataclass
class AuditReport:
    """Residuals ``lhs - rhs`` of one inequality at each audited ``k``."""

    name: str
    k: np.ndarray
    residual: np.ndarray
    slack: np.ndarray
    notes: list = field(default_factory=list)

    @property
    def ok(self):
        return self.residual <= self.slack

    @property
    def n_violations(self):
        return int(np.count_nonzero(~self.ok))

    @property
    def passed(self):
        return self.n_violations == 0

    def violations(self):
        return self.k[~self.ok]

    def __repr__(self):
        status = "PASS" if self.passed else f"FAIL ({self.n_violations})"
        return f"AuditReport({self.name!r}, n={self.k.size}, {status})"


def _history(trace):
    if trace.x is None:
        raise AuditSetupError("audits need a full trace; rerun without streaming")
    return trace.x, trace.y


def _gaps(trace):
    """Objective gaps recomputed from the iterates and the stored reference."""
    X, _ = _history(trace)
    return np.asarray(trace.problem.objective(X), dtype=float) - trace.problem.F_star


def _ref_tol(trace):
    tol = float(getattr(trace.problem, "f_star_tol", 0.0) or 0.0)
    return 0.0 if not math.isfinite(tol) else tol


def _maps(trace):
    _, Y = _history(trace)
    return gradient_mapping(trace.problem, trace.params.s, Y)


def _check_general(trace, params=None):
    if trace.method not in ("nag", "apg"):
        raise AuditSetupError(f"general energy needs a nag or apg run, got {trace.method}")
    if params is not None and params != trace.params:
        raise AuditSetupError("params do not match the trace")
    p = trace.params
    if not p.s * p.L < 1:
        raise AuditSetupError("general energy needs s < 1/L")


def energy_trace_general(trace, params=None):
    """General-kind energies for every recorded ``k``."""
    _check_general(trace, params)
    X, Y = _history(trace)
    s = trace.params.s
    t = trace.t_values
    gaps = _gaps(trace)
    potential = s * (t - 1.0) * t * gaps
    vec = (t - 1.0)[:, None] * (Y - X) + (Y - trace.problem.x_star)
    mixed = 0.5 * np.einsum("ij,ij->i", vec, vec)
    return EnergyTrace("general", potential + mixed, potential=potential, mixed=mixed,
                       mixed_vectors=vec, gaps=gaps, ref_tol=_ref_tol(trace))


def energy_general(trace, k, schedule=None, params=None):
    """``(E_p, E_m, E)`` of the general energy at iteration ``k``."""
    _check_general(trace, params)
    if schedule is not None and trace.schedule is not None and schedule.key != trace.schedule.key:
        raise AuditSetupError("schedule does not match the trace")
    X, Y = _history(trace)
    s = trace.params.s
    t = float(trace.t_values[k])
    gap = float(trace.problem.objective(X[k])) - trace.problem.F_star
    ep = s * (t - 1.0) * t * gap
    v = (t - 1.0) * (Y[k] - X[k]) + (Y[k] - trace.problem.x_star)
    em = 0.5 * float(v @ v)
    return ep, em, ep + em


def _check_fixed(trace):
    if trace.method not in ("nag", "apg", "gd"):
        raise AuditSetupError(f"fixed-step energy is not defined for {trace.method}")
    if not trace.params.fixed_step:
        raise AuditSetupError("fixed-step energy needs s = 1/L")


def energy_trace_fixed(trace, lam):
    """Fixed-kind energies for every recorded ``k``."""
    _check_fixed(trace)
    X, _ = _history(trace)
    gaps = _gaps(trace)
    d = np.diff(X, axis=0, prepend=X[:1])
    kinetic = 0.5 * np.einsum("ij,ij->i", d, d)
    return EnergyTrace("fixed", lam * gaps + kinetic, kinetic=kinetic, gaps=gaps,
                       ref_tol=_ref_tol(trace))


def energy_fixed(trace, k, lam):
    """``lambda gap_k + 0.5 ||x_k - x_{k-1}||^2``."""
    _check_fixed(trace)
    X, _ = _history(trace)
    gap = float(trace.problem.objective(X[k])) - trace.problem.F_star
    d = X[k] - X[max(k - 1, 0)]
    return lam * gap + 0.5 * float(d @ d)


def _energy_for(trace, cert):
    if isinstance(cert, FixedStepCertificate):
        return energy_trace_fixed(trace, cert.lam)
    return energy_trace_general(trace)


def _sq(a):
    return np.einsum("ij,ij->i", a, a)


def _slack(E, weight_tol):
    return SLACK_REL * (1.0 + np.abs(E)) + weight_tol


# ----------------------------------------------------------- audits ----

def audit_decrement(trace, schedule=None, params=None, lam=None):
    """Per-step energy decrement.

    General kind::

        E_{k+1} - E_k <= -(s^2 t^2 (1 - sL)/2) ||g_k||^2
                         - (mu s (t - 1) t / 2) ||y_k - x_k||^2 - (mu s t / 2) ||y_k - x*||^2

    with ``t = t_{k+1}`` and ``g_k`` the gradient (mapping) at ``y_k``.
    Fixed kind (pass ``lam``)::

        E_{k+1} - E_k <= -((lam L - 1)/2) ||x_{k+1} - x_k||^2
                         - ((1 - lam (L - mu))/2) ||x_k - y_k||^2
    """
    X, Y = _history(trace)
    p = trace.params if params is None else params
    if params is not None and params != trace.params:
        raise AuditSetupError("params do not match the trace")
    mu, L, s = p.mu, p.L, p.s
    if lam is None:
        en = energy_trace_general(trace)
        t = trace.t_values[:-1]
        g = _maps(trace)[:-1]
        rhs = (-(s * s * t * t * (1 - s * L) / 2) * _sq(g)
               - (mu * s * (t - 1) * t / 2) * _sq(Y[:-1] - X[:-1])
               - (mu * s * t / 2) * _sq(Y[:-1] - trace.problem.x_star))
        tol_w = (s * (trace.t_values[1:] - 1) * trace.t_values[1:]
                 + s * (t - 1) * t) * en.ref_tol
        name = "decrement"
    else:
        en = energy_trace_fixed(trace, lam)
        rhs = (-((lam * L - 1) / 2) * _sq(X[1:] - X[:-1])
               - ((1 - lam * (L - mu)) / 2) * _sq(X[:-1] - Y[:-1]))
        tol_w = 2 * lam * en.ref_tol
        name = "decrement_fixed"
    E = en.E
    resid = (E[1:] - E[:-1]) - rhs
    return AuditReport(name, np.arange(E.size - 1), resid, _slack(E[:-1], tol_w))


def _check_regime(trace, cert):
    if isinstance(cert, FixedStepCertificate):
        if not trace.params.fixed_step:
            raise AuditSetupError("fixed-step certificate needs a run at s = 1/L")
        if (cert.mu, cert.L) != (trace.params.mu, trace.params.L):
            raise AuditSetupError("certificate (mu, L) do not match the trace")
        if trace.method not in ("nag", "apg"):
            raise AuditSetupError(f"no fixed-step certificate for {trace.method}")
        return
    if not isinstance(cert, CertificateSeries):
        raise AuditSetupError(f"unsupported certificate {type(cert).__name__}")
    if trace.params.fixed_step:
        raise AuditSetupError("per-k certificates need s < 1/L; use the fixed-step one")
    if cert.params != trace.params:
        raise AuditSetupError("certificate params do not match the trace")
    if trace.method not in ("nag", "apg"):
        raise AuditSetupError(f"no per-k certificate for {trace.method}")
    if trace.schedule is None or cert.schedule.key != trace.schedule.key:
        raise AuditSetupError("certificate schedule does not match the trace")
    if cert.K < trace.K:
        raise AuditSetupError(f"certificate covers {cert.K} steps, trace has {trace.K}")


def _rates(trace, cert):
    """Per-step contraction factors ``rho_k`` for ``k = 0..K-1``."""
    if isinstance(cert, FixedStepCertificate):
        return np.full(trace.K, cert.rho)
    rho = cert.rho_apg if trace.method == "apg" else cert.rho
    return rho[: trace.K]


def audit_ratio(trace, cert):
    """``E_{k+1} <= rho_k E_k``.

    APG runs use ``rho_k = 1 - 1/D_k``; NAG uses ``1 - 1/min(C_k, D_k)``.
    """
    _check_regime(trace, cert)
    en = _energy_for(trace, cert)
    E = en.E
    rho = _rates(trace, cert)
    resid = E[1:] - rho * E[:-1]
    if isinstance(cert, FixedStepCertificate):
        tol_w = 2 * cert.lam * en.ref_tol
    else:
        t = trace.t_values
        tol_w = 2 * trace.params.s * (t[1:] - 1) * t[1:] * en.ref_tol
    return AuditReport("ratio", np.arange(trace.K), resid, _slack(E[:-1], tol_w))


def audit_gap_bound(trace, cert=None):
    """Closed-form bound on the objective gap for ``k = 1..K``.

    * per-k certificates: ``gap_k <= prod_{i<k} rho_i ||x0 - x*||^2 / (2 s (t_{k+1}-1) t_{k+1})``
    * fixed step: ``gap_k <= rho^k gap_0``
    * ``cert=None`` (convex case): the product is dropped.
    """
    X, _ = _history(trace)
    gaps = _gaps(trace)
    k = np.arange(1, trace.K + 1)
    if isinstance(cert, FixedStepCertificate):
        _check_regime(trace, cert)
        bound = np.exp(k * math.log(cert.rho)) * gaps[0]
        name = "gap_bound_fixed"
    else:
        if cert is None:
            _check_general(trace)
            log_prod = np.zeros(trace.K + 1)
            name = "gap_bound_convex"
        else:
            _check_regime(trace, cert)
            log_prod = (cert.log_rho_apg_product if trace.method == "apg"
                        else cert.log_rho_product)[: trace.K + 1]
            name = "gap_bound"
        r0 = X[0] - trace.problem.x_star
        t = trace.t_values[1:]
        s = trace.params.s
        bound = np.exp(log_prod[1:]) * float(r0 @ r0) / (2 * s * (t - 1) * t)
    tol = _ref_tol(trace)
    return AuditReport(name, k, gaps[1:] - bound, SLACK_REL * (1 + bound) + tol)


def audit_upper_envelopes(trace, schedule=None, params=None, witnesses=None, cert=None):
    """Witness-based upper bounds on ``E_k`` and ``E_{k+1}`` (general kind).

    ``witnesses`` defaults to the optimal ones stored in ``cert``; boundary
    witnesses are replaced by finite stand-ins since any positive values give
    valid bounds.  APG runs only check the ``E_{k+1}`` bound.
    Returns ``(report_Ek, report_Ek1)``; the first is ``None`` for APG.
    """
    _check_general(trace, params)
    if witnesses is None:
        if cert is None:
            raise AuditSetupError("pass witnesses or a certificate series")
        witnesses = cert.witnesses
    wt = witnesses.finite()
    K = trace.K
    a, b, u, v, w = (np.asarray(getattr(wt, f))[:K] for f in "abuvw")
    if a.size < K:
        raise AuditSetupError(f"witnesses cover {a.size} steps, trace has {K}")
    X, Y = _history(trace)
    p = trace.params
    mu, L, s = p.mu, p.L, p.s
    en = energy_trace_general(trace)
    E = en.E
    t1 = trace.t_values[:-1]
    t2 = trace.t_values[1:]
    g2 = _sq(_maps(trace)[:-1])
    dyx = _sq(Y[:-1] - X[:-1])
    dys = _sq(Y[:-1] - trace.problem.x_star)
    ks = np.arange(K)

    upper1 = ((t2 - 1) * t2 * (1 / (2 * mu * s) - 1 + L * s / 2)
              + (1 + u + 1 / v) * t1 * t1 / 2) * s * s * g2 \
        + (1 + v + w) * (t1 - 1) ** 2 / 2 * dyx + (1 + 1 / w + 1 / u) / 2 * dys
    tol1 = s * (t2 - 1) * t2 * en.ref_tol
    rep1 = AuditReport("envelope_next", ks, E[1:] - upper1, _slack(E[1:], tol1))
    if trace.method == "apg":
        return None, rep1

    upper0 = s * (t1 - 1) * t1 * (1 + mu / a) / (2 * mu) * g2 \
        + (1 + 1 / b) / 2 * dys \
        + ((1 + b) * (t1 - 1) ** 2 + s * (t1 - 1) * t1 * (a + L)) / 2 * dyx
    tol0 = s * (t1 - 1) * t1 * en.ref_tol
    rep0 = AuditReport("envelope_current", ks, E[:-1] - upper0, _slack(E[:-1], tol0))
    return rep0, rep1


def audit_mixed_increment(trace):
    """Check ``m_{k+1} - m_k = -t_{k+1} s g_k`` for the mixed-energy vectors."""
    en = energy_trace_general(trace)
    m = en.mixed_vectors
    X, Y = _history(trace)
    s = trace.params.s
    t = trace.t_values
    step = t[:-1, None] * s * _maps(trace)[:-1]
    diff = m[1:] - m[:-1] + step
    resid = np.linalg.norm(diff, axis=1)
    scale = (np.linalg.norm(m[1:], axis=1) + np.linalg.norm(m[:-1], axis=1)
             + np.linalg.norm(step, axis=1))
    # rounding floor: each mixed vector is formed from stored iterates
    mag = np.linalg.norm(X, axis=1) + np.linalg.norm(Y, axis=1) \
        + float(np.linalg.norm(trace.problem.x_star))
    floor = 64 * _EPS * ((t[1:] + 1) * mag[1:] + (t[:-1] + 1) * mag[:-1])
    return AuditReport("mixed_increment", np.arange(trace.K), resid,
                       MIXED_RTOL * scale + floor)


def audit_extrapolation(trace):
    """``t_{k+2}(y_{k+1} - x_{k+1}) = (t_{k+1} - 1)(x_{k+1} - x_k)`` per step."""
    _check_general(trace)
    X, Y = _history(trace)
    t = trace.t_values
    lhs = t[1:, None] * (Y[1:] - X[1:])
    rhs = (t[:-1] - 1)[:, None] * (X[1:] - X[:-1])
    resid = np.linalg.norm(lhs - rhs, axis=1)
    mag = np.linalg.norm(X[1:], axis=1) + np.linalg.norm(Y[1:], axis=1)
    scale = np.linalg.norm(lhs, axis=1) + np.linalg.norm(rhs, axis=1)
    floor = 64 * _EPS * (t[1:] + t[:-1]) * mag
    return AuditReport("extrapolation", np.arange(trace.K), resid,
                       MIXED_RTOL * scale + floor)


def audit_monotone(trace, lam=None):
    """``E_{k+1} <= E_k`` (fixed kind, or general kind with ``mu = 0``)."""
    en = energy_trace_general(trace) if lam is None else energy_trace_fixed(trace, lam)
    E = en.E
    return AuditReport("monotone", np.arange(E.size - 1), E[1:] - E[:-1],
                       _slack(E[:-1], 2 * en.ref_tol * (1 if lam is None else lam)))


def telescoping_error(energies):
    """Relative mismatch between ``E_K - E_0`` and the compensated sum of increments."""
    E = np.asarray(energies, dtype=float)
    total = math.fsum(np.diff(E).tolist())
    direct = E[-1] - E[0]
    return abs(total - direct) / max(abs(direct), abs(E[0]), 1e-300)


def run_audits(trace, cert):
    """All audits applicable to ``trace`` under ``cert``."""
    if isinstance(cert, FixedStepCertificate):
        return [audit_decrement(trace, lam=cert.lam),
                audit_ratio(trace, cert),
                audit_gap_bound(trace, cert),
                audit_monotone(trace, lam=cert.lam)]
    reports = [audit_decrement(trace), audit_ratio(trace, cert), audit_gap_bound(trace, cert)]
    reports.extend(r for r in audit_upper_envelopes(trace, cert=cert) if r is not None)
    reports.append(audit_mixed_increment(trace))
    reports.append(audit_extrapolation(trace))
    return reports
