import math
import threading

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accelcert.exceptions import ParameterDomainError
from accelcert.schedules import (
    RateParams, beta_at, make_schedule, nag_sc_beta, nag_sc_t, t_at, validate_nesterov_rule,
)


def test_linear_t1_is_one():
    assert t_at(make_schedule("linear", r=2), 1) == 1.0


def test_recurrence_first_values():
    s = make_schedule("recurrence")
    assert t_at(s, 2) == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-15)
    # high-precision oracle; the commonly quoted 2.1935268 is good to ~3e-7 only
    mp.mp.dps = 50
    t3 = (1 + mp.sqrt(1 + 4 * ((1 + mp.sqrt(5)) / 2) ** 2)) / 2
    assert t_at(s, 3) == pytest.approx(float(t3), rel=1e-15)
    assert t_at(s, 3) == pytest.approx(2.1935268, abs=1e-6)


def test_linear_values():
    s = make_schedule("linear", r=2)
    assert t_at(s, 3) == 2.0
    assert t_at(s, 2) == 1.5


def test_recurrence_k10_nesterov_step():
    s = make_schedule("recurrence")
    v, prev = t_at(s, 10), t_at(s, 9)
    assert v > prev
    assert v * v - v <= prev * prev * (1 + 1e-15)


def test_beta_examples():
    lin = make_schedule("linear", r=2)
    rec = make_schedule("recurrence")
    assert beta_at(lin, 2) == 0.25
    assert beta_at(lin, 1) == 0.0 and beta_at(rec, 1) == 0.0
    assert beta_at(rec, 0) == 0.0
    mp.mp.dps = 50
    t2 = (1 + mp.sqrt(5)) / 2
    t3 = (1 + mp.sqrt(1 + 4 * t2 ** 2)) / 2
    assert beta_at(rec, 2) == pytest.approx(float((t2 - 1) / t3), rel=1e-15)
    assert beta_at(rec, 2) == pytest.approx(0.2817529, abs=1e-6)


def test_linear_beta_closed_form():
    r = 3.0
    s = make_schedule("linear", r=r)
    k = np.arange(1, 2001)
    b = s.betas_upto(2001)[k + 1]
    assert np.allclose(b, k / (k + r + 1), rtol=4e-16, atol=0)


def test_linear_rule_rejects_small_r():
    with pytest.raises(ParameterDomainError):
        make_schedule("linear", r=1.5)


def test_unknown_rule():
    with pytest.raises(ParameterDomainError):
        make_schedule("cubic")


def test_repeated_queries_bit_identical():
    s = make_schedule("recurrence")
    a = s.t(500)
    s.t(5000)
    assert s.t(500) == a
    assert make_schedule("recurrence").t(500) == a


@pytest.mark.parametrize("rule", ["linear", "recurrence"])
def test_validate_long_horizon(rule):
    rep = validate_nesterov_rule(make_schedule(rule), 100_000)
    assert rep.passed, rep.failures()[:5]


def test_recurrence_nesterov_is_tight():
    rep = validate_nesterov_rule(make_schedule("recurrence"), 100_000)
    assert abs(rep.max_nesterov_excess) <= 1e-12


def test_custom_table_gap_failure():
    s = make_schedule("custom", table=[1, 3, 4])
    assert s.flagged
    rep = validate_nesterov_rule(s, 2)
    assert not rep.passed
    assert (1, "gap") in rep.failures()


def test_custom_table_bad_first_entry_is_reported():
    rep = validate_nesterov_rule(make_schedule("custom", table=[1.5, 2.0, 2.4, 2.8]), 3)
    assert rep.failures()[0] == (1, "t1_is_one")


def test_custom_table_horizon_clamped():
    rep = validate_nesterov_rule(make_schedule("custom", table=[1, 1.5, 2.0]), 50)
    assert rep.horizon == 2 and rep.notes


def test_custom_table_out_of_range():
    with pytest.raises(IndexError):
        make_schedule("custom", table=[1, 1.5]).t(3)


def test_validate_needs_horizon_two():
    with pytest.raises(ParameterDomainError):
        validate_nesterov_rule(make_schedule("linear"), 1)


def test_theta_form_matches_recurrence():
    # theta_0 = 1 and theta_{k+1} = (sqrt(theta^4 + 4 theta^2) - theta^2) / 2;
    # theta_{k-1} is the reciprocal of t_k
    s = make_schedule("recurrence")
    theta = 1.0
    for k in range(1, 1001):
        t = s.t(k)
        assert abs(1 / theta - t) / t <= 1e-12
        theta = (math.sqrt(theta ** 4 + 4 * theta ** 2) - theta ** 2) / 2


@pytest.mark.parametrize("mu,L,expected", [(1, 4, 1 / 3), (1, 100, 9 / 11)])
def test_nag_sc_beta(mu, L, expected):
    assert nag_sc_beta(mu, L) == pytest.approx(expected, rel=1e-15)


def test_nag_sc_beta_near_one():
    assert nag_sc_beta(1.0, 1.0 + 1e-10) < 1e-10


def test_nag_sc_domain():
    with pytest.raises(ParameterDomainError):
        nag_sc_beta(2.0, 1.0)
    with pytest.raises(ParameterDomainError):
        nag_sc_t(1.0, 1.0)


def test_rate_params_domain():
    with pytest.raises(ParameterDomainError):
        RateParams(2.0, 1.0, 0.1)
    with pytest.raises(ParameterDomainError):
        RateParams(1.0, 2.0, 0.6)
    with pytest.raises(ParameterDomainError):
        RateParams.from_fraction(1.0, 2.0, 0.0)
    assert RateParams.from_fraction(1.0, 3.0, 1.0).fixed_step
    assert RateParams.from_fraction(1.0, 3.0, 0.5).subcritical


def test_concurrent_extension_consistent():
    s = make_schedule("recurrence")
    ref = make_schedule("recurrence").t_upto(20000)
    out = {}

    def work(i):
        n = 2000 * (i + 1)
        out[i] = s.t_upto(n)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(10)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for i, arr in out.items():
        assert np.array_equal(arr[1:], ref[1 : arr.size])


@settings(max_examples=25, deadline=None)
@given(r=st.floats(min_value=2.0, max_value=100.0))
def test_linear_rule_property(r):
    rep = validate_nesterov_rule(make_schedule("linear", r=r), 2000)
    assert rep.passed
