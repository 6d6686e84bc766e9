import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from maass.turing import (
    CONCAVITY_FLOOR,
    ControlConfig,
    EigenvalueList,
    EigenvalueRecord,
    averaged_remainder,
    control_loop,
    fake_certification,
    perturb_list,
    turing_bounds,
    verdict,
    weyl_main_integral,
    weyl_main_term,
    weyl_remainder,
    weyl_remainder_sides,
)
from tests.oracles import weyl as W
from tests.synthetic import as_list, synthetic


SYN = synthetic()


def test_M_at_log_root():
    t = math.e * math.sqrt(math.pi / 2)
    assert weyl_main_term(t) == pytest.approx(math.e**2 * math.pi / 24 - 131 / 144, abs=1e-14)


def test_M_leading_term():
    assert weyl_main_term(1e12) / 1e24 == pytest.approx(1 / 12, rel=1e-8)
    t = np.linspace(10, 1000, 500)
    assert np.all(np.diff(weyl_main_term(t)) > 0)


def test_M_high_precision():
    for t in [1300.0, 100.0, 7.5]:
        assert weyl_main_term(t) == pytest.approx(float(W.M(t)), rel=1e-14)


def test_M_integral_against_quadrature():
    for t in [1.0, 15.0, 300.0, 2000.0]:
        assert weyl_main_integral(t) == pytest.approx(float(W.M_integral(t)), rel=1e-10)


def test_bounds():
    t = np.linspace(1.5, 500, 300)
    lo, hi = turing_bounds(t)
    assert np.array_equal(lo, -2 * hi)
    assert np.all(np.diff(hi[t > math.e]) < 0)
    assert turing_bounds(100.0)[1] == pytest.approx(float(W.E(100.0)), rel=1e-14)
    assert turing_bounds(20.0)[1] < 0.5 and turing_bounds(20.0)[0] > -0.5
    with pytest.raises(ValueError):
        turing_bounds(1.0)


def test_remainder_counting():
    rs = SYN
    assert weyl_remainder(12.0, []) == pytest.approx(-weyl_main_term(12.0))
    k = 5
    t = rs[k - 1] + 1e-9
    assert weyl_remainder(t, rs) == pytest.approx(k - weyl_main_term(t))
    left, right = weyl_remainder_sides(rs[3], rs)
    assert right - left == pytest.approx(1.0)


def test_averaged_remainder_empty():
    for t in [2.0, 30.0, 100.0]:
        assert averaged_remainder(t, []) == pytest.approx(-weyl_main_integral(t) / t, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 60.0), st.integers(0, 2**31))
def test_averaged_remainder_matches_quadrature(t, seed):
    rng = np.random.default_rng(seed)
    rs = np.sort(rng.uniform(0.5, 70, rng.integers(0, 80)))
    assert averaged_remainder(t, rs) == pytest.approx(W.averaged_remainder_quad(t, rs), abs=1e-9)


def test_averaged_remainder_continuous_at_jumps():
    for r in SYN[:20]:
        a = averaged_remainder(r * (1 - 1e-15), SYN)
        b = averaged_remainder(r * (1 + 1e-15), SYN)
        assert abs(a - b) < 1e-12


def test_synthetic_inside_bounds():
    v = verdict(SYN)
    assert v.t > 50.0
    t = np.linspace(20, v.t, 2000)
    lo, hi = turing_bounds(t)
    s = averaged_remainder(t, SYN)
    assert np.all((s > lo) & (s < hi))


def test_empty_list_verdict():
    v = verdict([])
    assert v.t == 0.0
    f = lambda t: float(-W.M_integral(t) / t + 2 * W.E(t))
    expected = 20.0 if f(20.0) <= 0 else brentq(f, 20.0, 60.0)
    assert v.T == pytest.approx(expected, rel=1e-9)


def test_verdict_invariants():
    for rs in (SYN, SYN[:30], []):
        v = verdict(rs)
        assert 0 <= v.t <= v.T
        assert v.missing_within[0] == pytest.approx(v.t**2 + 0.25)


def test_verdict_soundness_each_deletion():
    lst = as_list(SYN)
    v = verdict(lst)
    for e in lst:
        if e.r >= v.t:
            continue
        w = verdict(perturb_list(lst, "remove", e.r, e.symmetry))
        assert w.t <= e.r <= w.T


@settings(max_examples=25, deadline=None)
@given(st.integers(0, len(SYN) - 1))
def test_verdict_monotone_under_adding_genuine(i):
    rs = np.delete(SYN, i)
    assert verdict(SYN).t >= verdict(rs).t


def test_concavity_floor_positive():
    assert 1.0 < CONCAVITY_FLOOR < 20.0


def test_perturb_round_trip():
    lst = as_list(SYN[:40])
    ins = perturb_list(lst, "insert", 33.3, "even")
    assert len(ins) == len(lst) + 1 and ins.notes
    back = perturb_list(ins, "remove", 33.3, "even")
    assert back.entries == lst.entries
    with pytest.raises(KeyError):
        perturb_list(lst, "remove", 1.234)
    with pytest.raises(ValueError):
        perturb_list(lst, "swap", 1.0)


def test_fake_insert_certifies_and_removal_drops():
    lst = as_list(SYN)
    v = verdict(lst)
    ok, tau, excess = fake_certification(lst, v.t)
    assert ok and excess > 0 and tau >= v.t
    # removal pushes the average toward the lower bound after the gap
    r = SYN[len(SYN) // 2]
    removed = perturb_list(lst, "remove", r, None)
    t = np.linspace(r + 0.5, r + 3, 20)
    assert np.all(averaged_remainder(t, removed) < averaged_remainder(t, lst))


def test_list_invariants():
    with pytest.raises(ValueError):
        EigenvalueList((EigenvalueRecord(1.0, "odd"), EigenvalueRecord(1.0, "odd")))
    with pytest.raises(ValueError):
        EigenvalueList((EigenvalueRecord(-1.0, "odd"),))
    lst = EigenvalueList((EigenvalueRecord(2.0, "odd"), EigenvalueRecord(2.0, "even"), EigenvalueRecord(1.0, "odd")))
    assert lst.r_values().tolist() == [1.0, 2.0, 2.0]
    merged, added = lst.merged([EigenvalueRecord(1.0 + 1e-9, "odd"), EigenvalueRecord(3.0, "even")])
    assert added == 1 and len(merged) == 4


def test_control_loop_already_complete():
    lst = as_list(SYN)
    res = control_loop(lst, 10.0)
    assert res.status == "complete" and res.rounds == 0 and res.eigenvalues is lst


def test_control_loop_budget_partial():
    ticks = iter(range(10**6))
    res = control_loop(EigenvalueList(), 30.0, ControlConfig(budget_seconds=0.5), clock=lambda: next(ticks))
    assert res.status == "partial" and res.rounds == 0
