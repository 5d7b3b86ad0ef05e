import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stochheat import basis as B

unit = st.floats(0.0, 1.0)
times = st.floats(1e-3, 1.0)


def direct_green_1d(t, x, y, n=200):
    return sum(2 * math.exp(-math.pi**2 * k * k * t) * math.sin(math.pi * k * x)
               * math.sin(math.pi * k * y) for k in range(1, n))


# eigenfunctions ------------------------------------------------------------

def test_eigenfunction_values():
    assert B.eigenfunction(1, 0.0) == 0.0
    assert B.eigenfunction(1, 0.5) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert B.eigenfunction((1, 2), (0.5, 0.25)) == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize("k,x", [(0, 0.5), (-1, 0.5), (1.5, 0.5), (1, 1.2), (1, -0.1),
                                 ((1, 1), (0.5, 2.0))])
def test_eigenfunction_rejects(k, x):
    with pytest.raises(ValueError):
        B.eigenfunction(k, x)


@pytest.mark.parametrize("k", [1, 2, 7])
def test_eigenfunction_unit_norm(k):
    from scipy import integrate
    val = integrate.quad(lambda x: B.eigenfunction(k, x) ** 2, 0, 1, limit=200)[0]
    assert val == pytest.approx(1.0, abs=1e-12)
    assert B.eigenfunction(k, 1.0) == pytest.approx(0.0, abs=1e-14)


def test_evaluator_eigenvalues():
    ev = B.GreenEvaluator(2, 5)
    assert np.all(ev.eigenvalues > 0)
    assert np.all(np.diff(ev.eigenvalues, axis=0) > 0) and np.all(np.diff(ev.eigenvalues, axis=1) > 0)
    assert ev.eigenvalues[0, 1] == pytest.approx(5 * math.pi**2)
    with pytest.raises(ValueError):
        B.GreenEvaluator(3, 4)


# green kernel --------------------------------------------------------------

def test_green_reference_value():
    g = B.green_eval(0.1, 0.5, 0.5, cutoff=60)
    assert g == pytest.approx(direct_green_1d(0.1, 0.5, 0.5), rel=1e-13)
    assert g == pytest.approx(0.74569, abs=5e-5)
    assert g <= B.gauss_kernel(0.1, 0.0)
    assert B.gauss_kernel(0.1, 0.0) == pytest.approx((0.4 * math.pi) ** -0.5, rel=1e-15)
    assert B.gauss_kernel(0.1, 0.0) == pytest.approx(0.89206, abs=1e-5)


def test_green_decays():
    assert abs(B.green_eval(1000.0, 0.3, 0.6)) < 1e-12


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_green_rejects_nonpositive_time(t):
    with pytest.raises(ValueError):
        B.green_eval(t, 0.5, 0.5)
    with pytest.raises(ValueError):
        B.green_mass(t, 0.5)


def test_evaluator_matches_function():
    ev = B.GreenEvaluator(2, 40)
    x, y = (0.3, 0.7), (0.45, 0.2)
    assert ev(0.02, x, y) == pytest.approx(B.green_eval(0.02, x, y, cutoff=40), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(times, unit, unit)
def test_green_symmetric_1d(t, x, y):
    assert B.green_eval(t, x, y) == B.green_eval(t, y, x)


@settings(max_examples=40, deadline=None)
@given(times, st.tuples(unit, unit), st.tuples(unit, unit))
def test_green_symmetric_2d(t, x, y):
    assert B.green_eval(t, x, y) == B.green_eval(t, y, x)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 1.0), unit, unit)
def test_green_below_gauss(t, x, y):
    assert B.green_eval(t, x, y) <= B.gauss_kernel(t, x - y) + 1e-8


# mass and L2 ---------------------------------------------------------------

def test_mass_reference_value():
    ref = sum(4 / (math.pi * k) * math.exp(-math.pi**2 * k * k * 0.1) * math.sin(math.pi * k / 2)
              for k in range(1, 200, 2))
    assert B.green_mass(0.1, 0.5) == pytest.approx(ref, rel=1e-13)
    assert B.green_mass(0.1, 0.5) == pytest.approx(0.47449, abs=5e-6)


def test_mass_tends_to_one():
    vals = [B.green_mass(t, 0.5) for t in (1e-2, 1e-3, 1e-4)]
    # beyond t = 1e-3 the deficit is below double precision, so the mass itself is 1.0
    assert vals[0] < vals[1] <= vals[2] <= 1.0
    gaps = [B.green_mass_deficit(t, 0.5) for t in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2] > 0.0


def test_mass_vanishes_on_boundary():
    assert B.green_mass(0.1, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert B.green_mass(0.1, (0.5, 1.0)) == pytest.approx(0.0, abs=1e-15)
    assert B.green_mass(1e-3, 0.0) == 0.0
    assert B.green_mass_deficit(1e-3, (0.5, 1.0)) == 1.0


@pytest.mark.parametrize("t,x", [(1e-3, 0.5), (1e-3, 0.05), (1e-4, 0.71875), (1e-4, 0.001),
                                 (0.01, 0.9), (0.03, 0.2), (0.049, 0.6), (0.2, 0.5)])
def test_mass_deficit_matches_high_precision(t, x):
    assert B.green_mass_deficit(t, x) == pytest.approx(oracles.mass_deficit_1d(t, x), rel=1e-13)


def test_mass_deficit_two_dimensional():
    a, b = B.green_mass_deficit(0.02, 0.3), B.green_mass_deficit(0.02, 0.6)
    assert B.green_mass_deficit(0.02, (0.3, 0.6)) == pytest.approx(a + b - a * b, rel=1e-14)
    assert B.green_mass(0.02, (0.3, 0.6)) == pytest.approx((1 - a) * (1 - b), rel=1e-14)


def test_mass_series_and_images_agree():
    # the evaluation switches from images to the sine series at t = IMAGE_CUTOFF
    for x in np.linspace(0.0, 1.0, 21):
        lo = B.green_mass(B.IMAGE_CUTOFF * (1 - 1e-15), x)
        hi = B.green_mass(B.IMAGE_CUTOFF, x)
        assert abs(lo - hi) < 1e-14


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-4, 10.0), st.floats(0.001, 0.999))
def test_mass_in_unit_interval(t, x):
    m = B.green_mass(t, x)
    assert 0.0 < m <= 1.0
    assert B.green_mass_deficit(t, x) > 0.0


def test_l2_reference_value():
    ref = sum(2 * math.exp(-2 * math.pi**2 * k * k * 0.1) for k in range(1, 50, 2))
    val = B.green_l2(0.1, 0.5)
    assert val == pytest.approx(ref, rel=1e-13)
    assert val == pytest.approx(0.2778223, abs=1e-7)
    # the rounded figure quoted alongside this example is 0.27789; the sum is 0.2778223
    assert abs(val - 0.27789) < 1e-4
    assert val < B.green_l2_bound(0.1, 1)


def test_l2_two_dimensional():
    val = B.green_l2(0.05, (0.5, 0.5))
    ref = sum(2 * math.exp(-2 * math.pi**2 * k * k * 0.05) * math.sin(math.pi * k / 2) ** 2
              for k in range(1, 60)) ** 2
    assert val == pytest.approx(ref, rel=1e-13)
    assert val < (4 * math.pi * 0.05) ** -1
    assert B.green_l2(100.0, 0.5) < 1e-300


def test_l2_matches_quadrature():
    from scipy import integrate
    q = integrate.quad(lambda y: B.green_eval(0.01, 0.3, y) ** 2, 0, 1, limit=200)[0]
    assert B.green_l2(0.01, 0.3) == pytest.approx(q, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(0.0, 1.0), st.integers(1, 2))
def test_l2_below_bound(t, x, d):
    pt = (x,) * d
    assert B.green_l2(t, pt) < B.green_l2_bound(t, d)


# semigroup -----------------------------------------------------------------

def test_semigroup_residual():
    assert B.semigroup_residual(0.05, 0.05, 0.5, 0.5, quad_points=256, cutoff=50) < 1e-8
    assert B.semigroup_residual(0.1, 1e-4, 0.5, 0.5, quad_points=256, cutoff=50) < 1e-4


def test_semigroup_exponents_add():
    lam = B.GreenEvaluator(1, 30).eigenvalues
    # relative rounding of exp grows with the argument
    exact = np.exp(-lam * 0.05)
    rel = np.abs(np.exp(-lam * 0.03) * np.exp(-lam * 0.02) - exact) / exact
    assert np.all(rel <= 4e-16 * (1 + lam * 0.05))


def test_default_cutoff():
    n = B.default_cutoff(0.001)
    assert math.exp(-math.pi**2 * n * n * 0.001) < 1e-16
    assert math.exp(-math.pi**2 * (n - 1) ** 2 * 0.001) >= 1e-16
