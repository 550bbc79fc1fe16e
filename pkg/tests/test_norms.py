from __future__ import annotations

import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conepme.errors import NormError
from conepme.geometry import CrossSection, cutoff
from conepme.indicial import indicial_roots, membership_exponent_test
from conepme.norms import (GriddedFunction, mellin_norm, membership_csv, membership_suite,
                           random_smooth_pairs, submultiplicativity_smoke)
from conepme.spectrum import spectrum_analytic


@pytest.fixture(scope="module")
def tab():
    return spectrum_analytic(CrossSection.circle(Fraction(13, 10)), 4)


@pytest.fixture(scope="module")
def chart(tab):
    return indicial_roots(tab, 1)


def radial(tab, fn, **kw):
    return GriddedFunction.from_callable(lambda x, y: fn(x) + 0 * y[None, :], tab, **kw)


def closed_form_linear(L):
    # ||omega x||^2 over dx/x with weight x^0 on a circle of length L
    val, _ = quad(lambda x: x * cutoff(x) ** 2, 0, 1, epsabs=1e-15, limit=400)
    return math.sqrt(L * val)


def test_linear_term_matches_1d_integral(tab):
    exact = closed_form_linear(tab.volume)
    for n_r in (700, 1400):
        value, diag = mellin_norm(radial(tab, lambda x: x, n_r=n_r), 0, 1.0, 2, 1)
        assert diag.verdict == "convergent"
        assert abs(value - exact) / exact < 1e-6


def test_constant_diverges_logarithmically(tab):
    value, diag = mellin_norm(radial(tab, lambda x: 1.0 + 0 * x), 0, 1.0, 2, 1)
    assert not membership_exponent_test(0, 1, 1)
    assert diag.verdict == "divergent-with-rate" and diag.kind == "log"
    assert value == math.inf


def test_power_divergence_kind(tab):
    _, diag = mellin_norm(radial(tab, lambda x: x**-0.5), 0, 1.0, 2, 1)
    assert diag.verdict == "divergent-with-rate" and diag.kind == "power"
    assert diag.rate == pytest.approx(-1.0, abs=1e-2)


def test_zero_function(tab):
    value, diag = mellin_norm(radial(tab, lambda x: 0 * x), 1, 1.0, 2, 1)
    assert value == 0.0 and diag.convergent


@pytest.mark.parametrize("s", [0, 1, 2])
def test_scaling_is_linear(tab, s):
    u = GriddedFunction.from_callable(lambda x, y: x**0.7 * np.cos(y / 1.3)[None, :], tab, n_r=700)
    base, _ = mellin_norm(u, s, 1.0, 2, 1)
    for c in (-3.0, 0.25, 7.5):
        scaled, _ = mellin_norm(c * u, s, 1.0, 2, 1)
        assert scaled == pytest.approx(abs(c) * base, rel=1e-10)


def test_derivative_orders_add_terms(tab):
    # each extra derivative order only adds nonnegative terms
    u = GriddedFunction.from_callable(lambda x, y: x * np.cos(y / 1.3)[None, :], tab, n_r=700)
    vals = [mellin_norm(u, s, 1.0, 2, 1)[0] for s in (0, 1, 2)]
    assert vals[0] < vals[1] < vals[2]


def test_radial_derivative_of_power(tab):
    # (x d/dx) x^a = a x^a, so the s=1 norm squared is (1 + a^2) times the s=0 one
    a = 0.8
    val, _ = quad(lambda x: x ** (2 * a - 1) * cutoff(x) ** 2, 0, 1, epsabs=1e-15, limit=400)
    exact = math.sqrt(tab.volume * (1 + a**2) * val)
    errs = []
    for n_r in (700, 1400, 2800):
        v1, _ = mellin_norm(radial(tab, lambda x: x**a, n_r=n_r), 1, 1.0, 2, 1)
        errs.append(abs(v1 - exact) / exact)
    assert errs[-1] < 1e-4
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_insufficient_grid_errors(tab):
    u = radial(tab, lambda x: x, x_min=1e-6, n_r=3)
    with pytest.raises(NormError, match="insufficient grid"):
        mellin_norm(u, 2, 1.0, 2, 1)
    shallow = radial(tab, lambda x: x, x_min=5e-3, n_r=100)
    with pytest.raises(NormError, match="insufficient grid"):
        mellin_norm(shallow, 0, 1.0, 2, 1)


def test_invalid_arguments(tab):
    u = radial(tab, lambda x: x, n_r=200)
    with pytest.raises(NormError):
        mellin_norm(u, 1.5, 1.0, 2, 1)
    with pytest.raises(NormError):
        mellin_norm(u, -1, 1.0, 2, 1)
    with pytest.raises(NormError):
        mellin_norm(u, 0, 1.0, 0.5, 1)


def test_gridded_function_guards(tab):
    m = tab.weights.size
    with pytest.raises(NormError):
        GriddedFunction(np.array([-1.0, -2.0]), np.zeros((2, m)), tab)
    with pytest.raises(NormError):
        GriddedFunction(np.array([-1.0, 0.5]), np.zeros((2, m)), tab)
    with pytest.raises(NormError):
        GriddedFunction(np.array([-2.0, -1.0]), np.zeros((2, m + 1)), tab)
    with pytest.raises(NormError):
        GriddedFunction.from_callable(lambda x, y: x, tab, x_min=0.0)
    a = radial(tab, lambda x: x, n_r=50)
    b = radial(tab, lambda x: x, n_r=60)
    with pytest.raises(NormError):
        a * b


def test_collar_flag_skips_cutoff(tab):
    u = radial(tab, lambda x: x, n_r=700)
    pre = GriddedFunction(u.r, u.cut(), tab, collar=True)
    assert mellin_norm(pre, 0, 1.0, 2, 1)[0] == pytest.approx(mellin_norm(u, 0, 1.0, 2, 1)[0],
                                                             rel=1e-14)


def test_membership_random_pairs(chart):
    rng = np.random.default_rng(7)
    terms, sigmas = [], []
    while len(terms) < 10:
        e, sigma = rng.uniform(-1.5, 2.0), rng.uniform(-0.5, 2.5)
        if abs(e - (sigma - 1.0)) > 0.1:
            terms.append((e, 0))
            sigmas.append(sigma)
    rows = [membership_suite(chart, [t], s, 2, n_r=900)[0] for t, s in zip(terms, sigmas)]
    assert all(row.agree for row in rows)
    assert {row.analytic for row in rows} == {"convergent", "divergent"}


def test_membership_boundary_indeterminate(chart):
    (row,) = membership_suite(chart, [(0.0, 0)], 1.0, 2)
    assert row.analytic == row.quadrature == "indeterminate"


def test_membership_log_factor(chart):
    rows = membership_suite(chart, [(0.4, 1), (0.4, 2), (-0.4, 1)], 1.0, 2, n_r=900)
    assert [r.quadrature for r in rows] == ["convergent", "convergent", "divergent"]
    assert all(r.agree for r in rows)
    # 1-D oracle for the log term: integral of x^{0.8} ln^2 x over (0, 1) with cutoff
    val, _ = quad(lambda x: x ** (2 * 0.4 - 1) * math.log(x) ** 2 * cutoff(x) ** 2, 0, 1,
                  limit=400, epsabs=1e-14)
    shape = chart.spectrum.basis[:, 0]
    mass = float(chart.spectrum.weights @ shape**2)
    assert rows[0].value == pytest.approx(math.sqrt(mass * val), rel=1e-4)


@settings(max_examples=15, deadline=None)
@given(e=st.floats(-1.0, 1.5), sigma=st.floats(0.0, 2.0), delta=st.floats(-0.6, 0.6))
def test_weight_shift_moves_threshold(e, sigma, delta):
    tab = spectrum_analytic(CrossSection.circle(Fraction(13, 10)), 2)
    chart = indicial_roots(tab, 1)
    if abs(e - (sigma - 1.0)) < 0.1:
        return
    (a,) = membership_suite(chart, [(e, 0)], sigma, 2, n_r=500)
    (b,) = membership_suite(chart, [(e + delta, 0)], sigma + delta, 2, n_r=500)
    assert a.quadrature == b.quadrature == a.analytic


def test_weight_shift_value_identity(tab):
    u = GriddedFunction.from_callable(lambda x, y: x**0.9 * (1 + np.cos(y / 1.3))[None, :], tab,
                                      n_r=900)
    shifted = GriddedFunction(u.r, u.values * u.x[:, None] ** 0.3, tab)
    assert mellin_norm(shifted, 0, 1.3, 2, 1)[0] == pytest.approx(mellin_norm(u, 0, 1.0, 2, 1)[0],
                                                                 rel=1e-6)


def test_membership_csv_format(chart):
    rows = membership_suite(chart, [(0.5, 0), (-0.5, 0), (0.0, 0)], 1.0, 2, n_r=500)
    parsed = list(csv.reader(io.StringIO(membership_csv(rows))))
    assert parsed[0] == ["term", "sigma", "analytic", "quadrature", "value_or_rate"]
    assert [r[3] for r in parsed[1:]] == ["convergent", "divergent", "indeterminate"]
    assert list(csv.reader(io.StringIO(membership_csv([])))) == [parsed[0]]


def test_submultiplicativity_linear_pair(tab):
    u = radial(tab, lambda x: x, n_r=700)
    rep = submultiplicativity_smoke(u, u, 1, 1.0, 2, 1)
    assert rep.finite and rep.sigma == 3
    assert rep.to_dict()["bounded"]


def test_submultiplicativity_random_sample(tab):
    us, vs = random_smooth_pairs(tab, 20, 1.0, 1, np.random.default_rng(11), n_r=500)
    rep = submultiplicativity_smoke(us, vs, 1, 1.0, 2, 1)
    assert len(rep.ratios) == 20 and rep.bounded
    assert rep.max_ratio < 100


def test_submultiplicativity_precondition(tab):
    good = radial(tab, lambda x: x, n_r=500)
    bad = radial(tab, lambda x: 1.0 + 0 * x, n_r=500)
    with pytest.raises(NormError, match="precondition"):
        submultiplicativity_smoke(bad, good, 0, 1.0, 2, 1)
    with pytest.raises(NormError, match="precondition"):
        submultiplicativity_smoke(good, bad, 0, 1.0, 2, 1)
    with pytest.raises(NormError):
        submultiplicativity_smoke([good], [good, good], 0, 1.0, 2, 1)
