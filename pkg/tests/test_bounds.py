import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projpursuit.bounds import (
    BoundError,
    annealed_tv_bound,
    remark_scales,
    thm_main_bound,
    thm_testfcn_bound,
    waiting_time_lower,
)
from projpursuit.dataset import compute_conditions, generate

mpmath.mp.dps = 50


def _mp_testfcn(d, b, eps):
    d, b, eps = (mpmath.mpf(v) for v in (d, b, eps))
    return mpmath.sqrt(mpmath.pi / 2) * mpmath.exp(-(d - 1) * eps**2 / (32 * b))


def _mp_main(d, b, eps):
    d, b, eps = (mpmath.mpf(v) for v in (d, b, eps))
    c1 = 48 * mpmath.sqrt(mpmath.pi)
    c2 = mpmath.mpf(1) / (9 * mpmath.mpf(2) ** 16)
    return c1 * mpmath.sqrt(b) * eps ** mpmath.mpf(-1.5) * mpmath.exp(-c2 * (d - 1) * eps**5 / b**2)


def _rel(a, ref):
    ref = float(ref)
    return abs(a - ref) / abs(ref) if ref else abs(a)


# -- test-function bound -------------------------------------------------------------

def test_testfcn_example():
    r = thm_testfcn_bound(33, 0.0, 0.25, 0.6)
    assert r.value == pytest.approx(math.sqrt(math.pi / 2) * math.exp(-1.44), rel=1e-14)
    assert r.value == pytest.approx(0.2969, abs=5e-5)
    assert r.valid
    assert r.thresholds["concentration"] == pytest.approx(0.5554, abs=5e-5)
    assert r.thresholds["annealed"] == pytest.approx(0.125)


def test_testfcn_below_threshold_still_reports():
    r = thm_testfcn_bound(33, 0.0, 0.25, 0.3)
    assert not r.valid
    assert r.value == pytest.approx(float(_mp_testfcn(33, 0.25, 0.3)), rel=1e-14)


def test_testfcn_monotone_in_eps():
    vals = [thm_testfcn_bound(50, 0.1, 0.3, e).value for e in np.linspace(0.1, 20, 200)]
    assert all(b < a or b == a == 0.0 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10**7), st.floats(1e-3, 10.0), st.floats(1e-3, 5.0))
def test_testfcn_high_precision(d, b, eps):
    ref = _mp_testfcn(d, b, eps)
    if ref > mpmath.mpf("1e-290"):
        assert _rel(thm_testfcn_bound(d, 0.0, b, eps).value, ref) <= 1e-12


# -- main bound -----------------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10**12), st.floats(1e-2, 10.0), st.floats(1e-2, 10.0))
def test_main_high_precision(d, b, eps):
    ref = _mp_main(d, b, eps)
    if ref > mpmath.mpf("1e-290"):
        assert _rel(thm_main_bound(d, 0.0, b, eps).value, ref) <= 1e-12


def test_main_ceiling_precondition():
    r = thm_main_bound(10**12, 0.0, 0.25, 0.3)
    assert not r.valid and r.thresholds["ceiling"] == 0.25
    ok = thm_main_bound(10**12, 0.0, 0.25, 0.2)
    assert ok.valid


def test_main_decreases_with_d():
    for d in (10**8, 10**9, 10**10):
        a = thm_main_bound(d, 0.0, 0.25, 0.2)
        b = thm_main_bound(2 * d, 0.0, 0.25, 0.2)
        assert a.valid and b.valid
        assert b.value < a.value


def test_main_cube_d50_outside_regime():
    c = compute_conditions(generate("cube_design", 50, 4096, seed=1))
    r = thm_main_bound(50, c.a_const, c.b_const, c.b_const)
    assert not r.valid
    assert r.thresholds["concentration"] > c.b_const
    assert r.prob == 1.0


def test_domain_errors():
    for args in ((1, 0, 1, 1), (5, -1, 1, 1), (5, 0, 0, 1), (5, 0, 1, 0)):
        with pytest.raises(BoundError):
            thm_testfcn_bound(*args)
        with pytest.raises(BoundError):
            thm_main_bound(*args)


# -- annealed ---------------------------------------------------------------------------

def test_annealed_examples():
    assert annealed_tv_bound(101, 0.0) == pytest.approx(0.02)
    assert annealed_tv_bound(2, 0.0) == 2.0
    with pytest.raises(BoundError):
        annealed_tv_bound(1, 0.0)


def test_annealed_scale_free():
    ds = generate("clustered", 12, 300, seed=2)
    a0 = compute_conditions(ds).a_const
    a1 = compute_conditions(ds.scaled(13.0)).a_const
    assert annealed_tv_bound(12, a1) == pytest.approx(annealed_tv_bound(12, a0), rel=1e-12)


# -- natural scales ------------------------------------------------------------------------

def test_remark_testfcn_example():
    r = remark_scales(101, 0.25, 2.0, "testfcn")
    assert r.eps == pytest.approx(2 * 4 * math.sqrt(0.5) / 10, rel=1e-14)
    assert r.eps == pytest.approx(0.5657, abs=5e-5)
    assert r.value == pytest.approx(math.sqrt(math.pi / 2) * math.exp(-4), rel=1e-14)
    assert r.value == pytest.approx(0.02296, abs=5e-6)
    assert r.constants["theorem_value"] == pytest.approx(r.value, rel=1e-12)


@pytest.mark.parametrize("d, b, c", [(10**9, 0.25, 1.0), (10**11, 0.6, 2.5), (3 * 10**8, 1.0, 0.7)])
def test_remark_main_exact_closed_form(d, b, c):
    """The theorem at the remark's scale equals the derived closed form."""
    r = remark_scales(d, b, c, "main")
    assert r.constants["exact_value"] == pytest.approx(r.constants["theorem_value"], rel=1e-10)
    e = (mpmath.mpf(c) * 9 * mpmath.mpf(2) ** 16 * mpmath.mpf(b) ** 2 * mpmath.log(d - 1) / (d - 1)) ** mpmath.mpf("0.2")
    assert r.eps == pytest.approx(float(e), rel=1e-13)
    assert _rel(r.constants["theorem_value"], _mp_main(d, b, e)) <= 1e-10


def test_remark_main_exact_form_random_triples():
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 20:
        d = int(10 ** rng.uniform(8, 12))
        b, c = rng.uniform(0.1, 1.0), rng.uniform(1.2, 3.0)
        r = remark_scales(d, b, c, "main")
        if not r.valid:
            continue
        assert _rel(r.constants["exact_value"], thm_main_bound(d, 0.0, b, r.eps).value) <= 1e-10
        checked += 1


def test_remark_main_simplified_form_reported():
    r = remark_scales(10**10, 0.5, 1.5, "main")
    cpp = 48 * math.sqrt(math.pi) * 1.5 ** (-0.3)
    assert r.constants["C_double_prime"] == pytest.approx(cpp, rel=1e-14)
    assert r.value == pytest.approx(cpp * 0.5 / (10**10 - 1) ** 1.2, rel=1e-12)


def test_remark_errors():
    with pytest.raises(BoundError):
        remark_scales(100, 0.25, 0.3, "main")
    with pytest.raises(BoundError):
        remark_scales(2, 0.25, 1.0, "main")
    with pytest.raises(BoundError):
        remark_scales(100, 0.25, 1.0, "other")
    with pytest.raises(BoundError):
        remark_scales(100, 0.25, -1.0, "testfcn")


# -- waiting time -----------------------------------------------------------------------------

def test_waiting_degenerate_p_one():
    r = waiting_time_lower(50, 0.25, 0.25, require_valid=False)
    assert r.constants["p"] == 1.0 and r.value == 1.0


def test_waiting_inverse_p():
    # choose eps in the valid regime, then check E T >= 1/p exactly
    d, b = 10**11, 0.25
    for eps in (0.06, 0.07, 0.08):
        r = waiting_time_lower(d, b, eps)
        p = thm_main_bound(d, 0.0, b, eps).prob
        assert r.value == pytest.approx(1.0 / p, rel=1e-15)
        assert r.valid


def test_waiting_hundred():
    # bisect eps so that the main bound equals 0.01
    d, b = 10**11, 0.25
    thr = thm_main_bound(d, 0.0, b, b).thresholds
    lo, hi = max(thr["concentration"], thr["annealed"]), b
    assert thm_main_bound(d, 0.0, b, lo).value > 0.01 > thm_main_bound(d, 0.0, b, hi).value
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if thm_main_bound(d, 0.0, b, mid).value > 0.01:
            lo = mid
        else:
            hi = mid
    r = waiting_time_lower(d, b, hi)
    assert r.valid
    assert r.value == pytest.approx(100.0, rel=1e-9)


def test_waiting_underflow_is_infinite():
    r = waiting_time_lower(10**15, 0.25, 0.25)
    assert r.constants["p"] == 0.0 and r.value == math.inf
    assert json.loads(r.to_json())["value"] == "inf"


def test_waiting_cube_d1001_example():
    with pytest.raises(BoundError):
        waiting_time_lower(1001, 0.25, 0.25)
    r = waiting_time_lower(1001, 0.25, 0.25, require_valid=False)
    thm = thm_main_bound(1001, 0.0, 0.25, 0.25)
    assert not r.valid
    assert r.value == pytest.approx(1.0 / thm.prob)


def test_report_json_round_trip():
    r = thm_testfcn_bound(33, 0.0, 0.25, 0.6)
    back = json.loads(r.to_json())
    assert back["value"] == r.value and back["valid"] is True and back["prob"] == r.prob
