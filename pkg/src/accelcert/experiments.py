"""Rate comparisons between NAG, GD and NAG-sc and their crossover windows."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .certificates import comparison_rates
from .schedules import RateParams, make_schedule

COMPARATORS = ("gd_half", "gd_full", "nag_sc")
HORIZON_CAP = 200_000
_LOG10 = math.log(10.0)


class Crossover(NamedTuple):
    k_beg: int
    k_end: int
    contiguous: bool


def crossover_interval(ratio_a, ratio_b):
    """First and last position where ``ratio_a < ratio_b`` (``None`` if never).

    Works on raw ratios or on their logarithms alike.
    """
    a = np.asarray(ratio_a, dtype=float)
    b = np.asarray(ratio_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("sequences must have the same length")
    idx = np.flatnonzero(a < b)
    if idx.size == 0:
        return None
    k_beg, k_end = int(idx[0]), int(idx[-1])
    return Crossover(k_beg, k_end, idx.size == k_end - k_beg + 1)


@dataclass
class ComparisonRow:
    kappa: float
    rule: str
    comparator: str
    k_beg: Optional[int]
    k_end: Optional[int]
    status: str = "ok"


def _window_closed(log_nag, log_cmp):
    # closed once NAG is no longer ahead at the horizon and keeps losing ground
    diff = log_nag[-2:] - log_cmp[-2:]
    return bool(diff[-1] >= 0 and diff[-1] >= diff[0])


def compare_rule(kappa, rule, mu=1.0, s_frac=0.5, r=None, start=1000, cap=HORIZON_CAP):
    """Crossover rows for one schedule rule; the horizon doubles until all windows close.

    Returns ``(rows, rates)`` where ``rates`` are the log ratios at the final horizon.
    """
    L = kappa * mu
    params = RateParams.from_fraction(mu, L, s_frac)
    schedule = make_schedule(rule, r=r)
    K = min(start, cap)
    while True:
        rates = comparison_rates(params, K, schedule)
        closed = {c: _window_closed(rates.log_nag, getattr(rates, "log_" + c))
                  for c in COMPARATORS}
        if all(closed.values()) or K >= cap:
            break
        K = min(2 * K, cap)
    rows = []
    for c in COMPARATORS:
        cx = crossover_interval(rates.log_nag, getattr(rates, "log_" + c))
        if cx is None:
            rows.append(ComparisonRow(kappa, rule, c, None, None, "na"))
            continue
        status = "ok" if cx.contiguous else "noncontiguous"
        if not closed[c]:
            status = "open"
        rows.append(ComparisonRow(kappa, rule, c, cx.k_beg, cx.k_end, status))
    return rows, rates


def table2(kappas=(4, 50, 200, 1000), rules=("recurrence", "linear"), mu=1.0, s_frac=0.5,
           workers=4):
    """Crossover rows for every ``(kappa, rule, comparator)``, in a fixed order."""
    jobs = [(float(k), rule) for k in kappas for rule in rules]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda job: compare_rule(job[0], job[1], mu, s_frac)[0], jobs))
    rows = [row for part in results for row in part]
    order = {c: i for i, c in enumerate(COMPARATORS)}
    return sorted(rows, key=lambda r: (r.kappa, r.rule, order[r.comparator]))


def format_log_value(log_v):
    """Decimal string (17 significant digits) for ``exp(log_v)``.

    Values below the double range are written as ``<mantissa>e<exponent>``
    computed in log space, so the column never collapses to zero.
    """
    if math.isinf(log_v):
        return "inf" if log_v > 0 else "0"
    if log_v > -700.0:
        return "%.17g" % math.exp(log_v)
    l10 = log_v / _LOG10
    e = math.floor(l10)
    m = 10.0 ** (l10 - e)
    if m >= 10.0:
        m, e = m / 10.0, e + 1
    return "%.16fe%d" % (m, e)
