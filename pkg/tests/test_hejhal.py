import dataclasses
import math

import numpy as np
import pytest

from maass.besselk import besselk_ir_scaled
from maass.geometry import Y0, sample_horocycle
from maass.hejhal import (
    HejhalError,
    HejhalSetup,
    automorphy_residual,
    build_system,
    choose_height,
    coefficient_count,
    default_height,
    evaluate_form,
    extend_candidate,
    phase1_solve,
    phase2_extend,
    sample_size,
    verification_heights,
    y_independence_check,
)

R_ODD = 9.533695261353557
R_EVEN = 13.779751351890738


def solve(r, symmetry, factor=1.0):
    setup = HejhalSetup.at(r, symmetry, height_factor=factor)
    return phase1_solve(setup.system(r))


@pytest.fixture(scope="module")
def odd_form():
    return solve(R_ODD, "odd")


@pytest.fixture(scope="module")
def even_form():
    return solve(R_EVEN, "even")


def test_default_height_range():
    for r in [0.0, 10.0, 100.0, 1e4]:
        assert 0.05 <= default_height(r) <= 0.8 * Y0


def test_height_at_floor_rejected():
    with pytest.raises(ValueError):
        sample_horocycle(Y0, 20)


def test_system_shape_and_identity(odd_form):
    setup = HejhalSetup.at(R_ODD, "odd")
    sys_ = setup.system(R_ODD)
    assert sys_.Mrows == sys_.M0 == setup.M0
    assert sys_.C.shape == (sys_.M0, sys_.M0)
    n = np.arange(sys_.M0)
    expected = -sys_.V / sys_.weights[:, None]
    expected[n, n] += 1.0
    assert np.allclose(sys_.C, expected, rtol=0, atol=1e-14)
    assert np.allclose(sys_.weighted, sys_.weights[:, None] * sys_.C, atol=1e-14)


def test_V_invariant_under_sample_reordering():
    y = 0.3
    s = sample_horocycle(y, 40)
    perm = np.random.default_rng(0).permutation(40)
    shuffled = dataclasses.replace(s, x=s.x[perm], xs=s.xs[perm], ys=s.ys[perm], maps=s.maps[perm])
    a = build_system(R_ODD, "odd", s, 12)
    b = build_system(R_ODD, "odd", shuffled, 12)
    assert np.allclose(a.V, b.V, rtol=1e-13, atol=1e-15)


def test_phase1_normalization(odd_form):
    assert odd_form.coefficients[0] == 1.0
    assert np.all(np.isfinite(odd_form.coefficients))
    assert odd_form.eigenvalue > 0.25


def test_phase1_residual_minimized_at_eigenvalue(odd_form):
    setup = HejhalSetup.at(R_ODD, "odd")
    grid = R_ODD + np.linspace(-0.4, 0.4, 17)
    res = [phase1_solve(setup.system(r)).residual_phase1 for r in grid]
    assert int(np.argmin(res)) == 8
    off = phase1_solve(setup.system(9.0)).residual_phase1
    assert off > 1e4 * odd_form.residual_phase1


def test_two_height_coefficients(even_form):
    other = solve(R_EVEN, "even", factor=0.9)
    assert other.y != even_form.y
    assert abs(other.coefficients[1] - even_form.coefficients[1]) <= 1e-6


def test_y_independence(odd_form):
    heights = verification_heights(odd_form.y)
    assert len(heights) == 3
    assert y_independence_check(odd_form, heights) < 1e-6
    # consistency with the solve height
    assert y_independence_check(odd_form, [odd_form.y, odd_form.y]) == pytest.approx(odd_form.residual_phase1, rel=1e-8, abs=1e-15)
    off = solve(9.3, "odd")
    assert y_independence_check(off, verification_heights(off.y)) > 1e-3
    with pytest.raises(ValueError):
        y_independence_check(odd_form, [0.3])


def test_phase2_empty_and_bounds(odd_form):
    a, b = phase2_extend(odd_form, 0.3, odd_form.M0)
    assert a.size == b.size == 0
    with pytest.raises(HejhalError):
        phase2_extend(odd_form, 0.5, 10_000)


def test_phase2_two_heights_agree(odd_form):
    m = 30
    a1 = extend_candidate(odd_form, m, y=0.2)
    a2 = extend_candidate(odd_form, m, y=0.17)
    tol = a1.coefficient_errors + a2.coefficient_errors + 1e-7
    assert np.all(np.abs(a1.coefficients - a2.coefficients) <= tol)


def test_hecke_multiplicativity(odd_form):
    ext = extend_candidate(odd_form, 12)
    a = ext.coefficients
    e = ext.coefficient_errors
    # a2 a3 = a6, a2^2 = a4 + 1 for Hecke eigenforms on the modular group
    assert abs(a[1] * a[2] - a[5]) < 1e-6 + abs(a[2]) * e[1] + abs(a[1]) * e[2] + e[5]
    assert abs(a[1] ** 2 - a[3] - 1.0) < 1e-6


def test_evaluation_symmetries(odd_form, even_form):
    assert evaluate_form(odd_form, 0.0, 1.0) == 0.0
    xs = np.linspace(-0.5, 0.5, 7)
    assert np.array_equal(evaluate_form(even_form, xs, 1.2), evaluate_form(even_form, -xs, 1.2))
    assert np.allclose(evaluate_form(odd_form, xs, 1.2), -evaluate_form(odd_form, -xs, 1.2), atol=1e-15)
    with pytest.raises(HejhalError):
        evaluate_form(odd_form, 0.1, 1e-3)


def test_automorphy(odd_form, even_form):
    assert automorphy_residual(odd_form, 100, seed=3) < 1e-6
    assert automorphy_residual(even_form, 100, seed=4) < 1e-6
    off = solve(9.3, "odd")
    assert automorphy_residual(off, 100) > 1e-4


def test_exponential_weighting_identity():
    # projecting a truncated expansion on its own horocycle recovers a_m w_m
    r, y, M = 11.0, 0.4, 15
    rng = np.random.default_rng(2)
    a = rng.normal(size=M)
    Q = 40
    x = (np.arange(Q) + 0.5) / (2 * Q)
    n = np.arange(1, M + 1)
    w = math.sqrt(y) * besselk_ir_scaled(r, 2 * math.pi * n * y)
    f = (np.sin(2 * math.pi * np.outer(x, n)) * w) @ a
    proj = (2.0 / Q) * np.sin(2 * math.pi * np.outer(n, x)) @ f
    assert np.allclose(proj, a * w, atol=1e-12)


def test_fewer_samples_degrade_residual():
    setup = HejhalSetup.at(R_ODD, "odd")
    good = phase1_solve(setup.system(R_ODD)).residual_phase1
    small = sample_horocycle(setup.y, setup.M0)
    coarse = phase1_solve(build_system(R_ODD, "odd", small, setup.M0)).residual_phase1
    assert coarse > good


def test_choose_height_failure():
    with pytest.raises(HejhalError):
        choose_height(50.0, 60, start=0.7, tries=1)


def test_sizes():
    M0 = coefficient_count(R_ODD)
    assert M0 >= 2
    assert sample_size(R_ODD, 0.3, M0) > M0
