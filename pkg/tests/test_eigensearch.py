import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maass.eigensearch import (
    LinearisationError,
    Rejection,
    ScanReport,
    SearchConfig,
    TrialGrid,
    derivative_C,
    linearised_solutions,
    merge_candidates,
    refine,
    scan,
    trial_spacing,
)
from maass.hejhal import CuspFormCandidate, HejhalSetup

R_ODD = 9.533695261353557
CFG = SearchConfig()


@pytest.fixture(scope="module")
def setup():
    return HejhalSetup.at(9.5, "odd")


@given(st.floats(0.01, 1e4))
def test_spacing_positive_and_capped(r):
    s = trial_spacing(r)
    assert 0.02 <= s <= 0.5


def test_grid_invariants():
    with pytest.raises(ValueError):
        TrialGrid(0.25, 10.0, "odd")
    with pytest.raises(ValueError):
        TrialGrid(20.0, 10.0, "odd")
    with pytest.raises(ValueError):
        TrialGrid(1.0, 2.0, "neither")
    rs = TrialGrid.from_r(9, 12, "even").r_values()
    assert rs[0] == 9 and rs[-1] <= 12 and np.all(np.diff(rs) > 0)


def test_derivative_stencil_and_richardson(setup):
    lam = 9.5**2 + 0.25
    d1 = derivative_C(lam, setup, delta=0.08, row_multiplied=True)
    d2 = derivative_C(lam, setup, delta=0.04, row_multiplied=True)
    d3 = derivative_C(lam, setup, delta=0.02, row_multiplied=True)
    big = np.abs(d2 - d3) > 1e-6 * np.abs(d3).max()
    ratio = np.abs(d1 - d2)[big] / np.abs(d2 - d3)[big]
    assert np.median(ratio) == pytest.approx(4.0, rel=0.05)
    assert np.array_equal(derivative_C(lam, setup, delta=-0.04), derivative_C(lam, setup, delta=0.04))


def test_linearisation_predicts_nearby_eigenvalue(setup):
    lam = 9.5**2 + 0.25
    sols = linearised_solutions(lam, setup)
    assert 1 <= len(sols) <= setup.M0
    h = min((s.h for s in sols), key=abs)
    # the prediction lands within one trial step in r
    assert abs(np.sqrt(lam + h.real - 0.25) - R_ODD) < trial_spacing(9.5)
    for s in sols:
        assert s.alpha.shape == (setup.M0,)


def test_pencil_guard(setup):
    with pytest.raises(LinearisationError):
        linearised_solutions(9.5**2 + 0.25, setup, SearchConfig(cond_max=1.0))


def test_refine_converges_and_is_consistent():
    out = []
    for rt in (9.45, 9.6):
        setup = HejhalSetup.at(rt, "odd")
        lam = rt * rt + 0.25
        sol = min(linearised_solutions(lam, setup), key=lambda s: abs(s.h))
        res = refine(sol, setup)
        assert isinstance(res, CuspFormCandidate)
        assert res.residual_y_independence < CFG.y_tol
        out.append(res.r)
    assert abs(out[0] - R_ODD) < 1e-9
    assert abs(out[0] - out[1]) < 2 * CFG.refine_tol


def test_refine_duplicate_and_gap():
    setup = HejhalSetup.at(11.0, "odd")
    sols = sorted(linearised_solutions(11.0**2 + 0.25, setup), key=lambda s: abs(s.h))
    res = refine(sols[0], setup)
    assert isinstance(res, Rejection) and res.reason == "y-dependent"
    setup = HejhalSetup.at(9.5, "odd")
    sol = min(linearised_solutions(9.5**2 + 0.25, setup), key=lambda s: abs(s.h))
    dup = refine(sol, setup, known=[R_ODD])
    assert isinstance(dup, Rejection) and dup.reason == "duplicate"


def test_scan_first_odd_window():
    report = ScanReport()
    found = scan(TrialGrid.from_r(9, 10, "odd"), known=(), report=report)
    assert len(found) == 1 and abs(found[0].r - R_ODD) < 1e-9
    assert report.trials == len(TrialGrid.from_r(9, 10, "odd").r_values())
    # idempotent once known, also at a perturbed height
    again = scan(TrialGrid.from_r(9, 10, "odd"), SearchConfig(height_factor=0.93), known=[found[0].r])
    assert merge_candidates([found, again]) == found


def test_scan_gap_is_empty():
    assert scan(TrialGrid.from_r(10.0, 10.5, "odd")) == []


def _cand(sym, r, res=1e-9):
    return CuspFormCandidate(sym, r, np.array([1.0]), 0.0, res)


def test_merge_order_independent_and_idempotent():
    a = [_cand("odd", 1.0), _cand("even", 2.0), _cand("odd", 1.0 + 1e-9, 1e-12)]
    b = [_cand("odd", 3.0)]
    m1 = merge_candidates([a, b])
    m2 = merge_candidates([b, a[::-1]])
    assert [(c.symmetry, c.r) for c in m1] == [(c.symmetry, c.r) for c in m2]
    assert len(m1) == 3
    assert merge_candidates([m1, m1]) == m1


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(refine_tol=0)
    with pytest.raises(ValueError):
        SearchConfig(max_iter=0)
