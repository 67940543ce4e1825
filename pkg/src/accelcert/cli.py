"""Command-line front end: ``accelcert {solve,certify,certify-fixed,compare,audit}``."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import certificates as cert_mod
from .exceptions import AccelCertError, AuditSetupError, DivergenceError, ParameterDomainError
from .experiments import COMPARATORS, compare_rule, format_log_value
from .lyapunov import energy_trace_fixed, energy_trace_general, run_audits
from .problems import composite_lasso, logistic_problem, quadratic_problem
from .schedules import RateParams, make_schedule
from .solvers import run

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_AUDIT = 0, 1, 2, 3
OUT_ENV = "ACCEL_CERT_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v):
    return "%.17g" % v


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def read_config(path):
    """Flat ``key=value`` file; ``#`` starts a comment, dashes and underscores are equivalent."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterDomainError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# ------------------------------------------------------------ problems ----

def build_problem(kind, kappa, mu, dim, seed):
    """Random instance with exactly the requested ``(mu, L = kappa mu)``."""
    rng = np.random.default_rng(seed)
    L = kappa * mu
    if kind == "quadratic":
        d = rng.uniform(mu, L, dim)
        d[0], d[-1] = mu, L
        return quadratic_problem(d, rng.normal(size=dim))
    if kind == "logistic":
        m = 2 * dim
        A = rng.normal(size=(m, dim))
        # curvature bound mu + sigma_max^2 / (4m) must equal L
        A *= np.sqrt(4 * m * (L - mu)) / np.linalg.norm(A, 2)
        labels = np.where(rng.random(m) < 0.5, -1.0, 1.0)
        return logistic_problem(A, labels, mu)
    if kind == "lasso":
        m = max(1, dim // 2)
        A = rng.normal(size=(m, dim))
        # m < n leaves a null space, so the smooth part has mu = mu_reg exactly
        A *= np.sqrt(L - mu) / np.linalg.norm(A, 2)
        return composite_lasso(A, rng.normal(size=m), mu, 0.1)
    raise ParameterDomainError(f"unknown problem {kind!r}")


def _method(args):
    return args.method.replace("-", "_")


def _setup(args):
    if not args.kappa > 1:
        raise ParameterDomainError("kappa must exceed 1")
    if not 0 < args.s_frac <= 1:
        raise ParameterDomainError("s-frac must lie in (0, 1]")
    problem = build_problem(args.problem, args.kappa, args.mu, args.dim, args.seed)
    params = RateParams.from_fraction(problem.mu, problem.L, args.s_frac)
    schedule = make_schedule(args.rule, r=args.r)
    return problem, params, schedule


def _check_method_problem(parser, args):
    method = _method(args)
    if method == "apg" and args.problem != "lasso":
        parser.error("--method apg needs a composite problem (--problem lasso)")
    if method != "apg" and args.problem == "lasso":
        parser.error("--problem lasso is composite; use --method apg")


def _certificate(params, schedule, K):
    if params.fixed_step:
        return cert_mod.rho_fixed(params.mu, params.L)
    return cert_mod.certificate_series(schedule, params, K)


# ------------------------------------------------------------ commands ----

def cmd_solve(args, parser):
    _check_method_problem(parser, args)
    problem, params, schedule = _setup(args)
    method = _method(args)
    trace = run(method, problem, schedule, params, K=args.iters)
    energy = np.full(trace.K + 1, np.nan)
    if method in ("nag", "apg") and not trace.streaming:
        if params.fixed_step:
            energy = energy_trace_fixed(trace, cert_mod.rho_fixed(params.mu, params.L).lam).E
        else:
            energy = energy_trace_general(trace).E
    rows = ((str(k), _fmt(trace.gaps[k]), _fmt(trace.map_norms[k]), _fmt(trace.t_values[k]),
             _fmt(trace.beta_values[k]), _fmt(energy[k])) for k in range(trace.K + 1))
    path = args.out / "trace.csv"
    _write_csv(path, ("k", "gap", "map_norm", "t", "beta", "energy"), rows)
    print(f"wrote {path} ({trace.K + 1} rows)")
    return EXIT_OK


def cmd_certify(args, parser):
    if args.s_frac >= 1:
        parser.error("s = 1/L has a single constant rate; use certify-fixed")
    params = RateParams.from_fraction(args.mu, args.kappa * args.mu, args.s_frac)
    schedule = make_schedule(args.rule, r=args.r)
    series = cert_mod.certificate_series(schedule, params, args.iters)
    c_inf, d_inf = _fmt(series.C_inf), _fmt(series.D_inf)
    rows = ((str(k), _fmt(series.C[k]), _fmt(series.D[k]), _fmt(series.rho[k]),
             format_log_value(series.log_rho_product[k + 1]), c_inf, d_inf)
            for k in range(series.K))
    path = args.out / "certificates.csv"
    _write_csv(path, ("k", "C_k", "D_k", "rho_k", "rho_prod", "C_inf", "D_inf"), rows)
    print(f"wrote {path} ({series.K} rows)")
    return EXIT_OK


def cmd_certify_fixed(args, parser):
    fc = cert_mod.rho_fixed(args.mu, args.kappa * args.mu)
    print(f"lambda={_fmt(fc.lam)}")
    print(f"theta={_fmt(fc.theta)}")
    print(f"rho={_fmt(fc.rho)}")
    return EXIT_OK


def cmd_compare(args, parser):
    rows = []
    ratios = None
    for rule in ("recurrence", "linear"):
        part, rates = compare_rule(args.kappa, rule, args.mu, args.s_frac,
                                   r=args.r if rule == "linear" else None,
                                   start=args.iters)
        rows.extend(part)
        if rule == args.rule:
            ratios = rates
    K = ratios.k.size - 1
    cols = [ratios.log_nag] + [getattr(ratios, "log_" + c) for c in COMPARATORS]
    ratio_rows = ((str(k),) + tuple(format_log_value(c[k]) for c in cols)
                  for k in range(1, K + 1))
    _write_csv(args.out / "ratios.csv",
               ("k", "nag_ratio", "gd_half_ratio", "gd_full_ratio", "nagsc_ratio"), ratio_rows)

    def opt(v):
        return "" if v is None else str(v)

    table = ((_fmt(r.kappa), r.rule, r.comparator, opt(r.k_beg), opt(r.k_end), r.status)
             for r in rows)
    _write_csv(args.out / "table2.csv",
               ("kappa", "rule", "comparator", "k_beg", "k_end", "status"), table)
    for r in rows:
        window = "N.A" if r.k_beg is None else f"[{r.k_beg}, {r.k_end}]"
        print(f"{r.rule:10s} {r.comparator:8s} {window} {r.status}")
    return EXIT_OK


def cmd_audit(args, parser):
    _check_method_problem(parser, args)
    problem, params, schedule = _setup(args)
    method = _method(args)
    if method not in ("nag", "apg"):
        raise AuditSetupError(f"no Lyapunov certificate for {method}")
    trace = run(method, problem, schedule, params, K=args.iters, streaming=False)
    reports = run_audits(trace, _certificate(params, schedule, args.iters))
    rows = []
    for rep in reports:
        ok = rep.ok
        for i in range(rep.k.size):
            rows.append((str(int(rep.k[i])), rep.name, _fmt(rep.residual[i]),
                         _fmt(rep.slack[i]), "1" if ok[i] else "0"))
    _write_csv(args.out / "audit.csv", ("k", "ineq", "residual", "slack", "pass"), rows)
    n_bad = sum(r.n_violations for r in reports)
    for rep in reports:
        print(f"{rep.name:18s} {'ok' if rep.passed else f'{rep.n_violations} violations'}")
    print("PASS" if n_bad == 0 else f"FAIL {n_bad} violations")
    return EXIT_OK if n_bad == 0 else EXIT_AUDIT


COMMANDS = {
    "solve": cmd_solve,
    "certify": cmd_certify,
    "certify-fixed": cmd_certify_fixed,
    "compare": cmd_compare,
    "audit": cmd_audit,
}


def _shared(p):
    p.add_argument("--kappa", type=float, default=4.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--rule", choices=("recurrence", "linear"), default="recurrence")
    p.add_argument("--r", type=float, default=None, help="linear-rule parameter (>= 2)")
    p.add_argument("--s-frac", type=float, default=0.5, help="step size s = s_frac / L")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--method", choices=("gd", "nag", "nag-sc", "apg"), default="nag")
    p.add_argument("--problem", choices=("quadratic", "logistic", "lasso"), default="quadratic")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path(os.environ.get(OUT_ENV, ".")))
    p.add_argument("--config", type=Path, default=None, help="key=value defaults file")


def make_parser():
    parser = _Parser(prog="accelcert", description="Accelerated-gradient rate certificates")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        _shared(sub.add_parser(name))
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        try:
            conf = read_config(args.config)
        except (OSError, ParameterDomainError) as exc:
            parser.error(str(exc))
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(conf) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**conf)
        args = parser.parse_args(argv)
    if args.iters < 1:
        parser.error("--iters must be >= 1")
    try:
        return COMMANDS[args.command](args, parser)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (AccelCertError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
