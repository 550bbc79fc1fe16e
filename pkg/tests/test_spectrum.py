from __future__ import annotations

import json
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conepme.errors import SpectrumError
from conepme.geometry import CrossSection
from conepme.spectrum import spectrum_analytic, spectrum_numeric


def _sphere_dim(j, n):
    # harmonic polynomials of degree j in n+1 variables
    return comb(j + n, n) - (comb(j + n - 2, n) if j >= 2 else 0)


def test_unit_circle_eigenvalues():
    t = spectrum_analytic(CrossSection.circle(1), 2)
    assert list(t.eigenvalues) == [0, -1, -4]
    assert list(t.multiplicities) == [1, 2, 2]
    assert all(isinstance(e.exact, Fraction) for e in t.entries)


def test_sphere_eigenvalues():
    t = spectrum_analytic(CrossSection.sphere(2), 2)
    assert list(t.eigenvalues) == [0, -2, -6]
    assert list(t.multiplicities) == [1, 3, 5]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_sphere_multiplicities_match_harmonic_dimension(n):
    t = spectrum_analytic(CrossSection.sphere(n), 6)
    assert list(t.multiplicities) == [_sphere_dim(j, n) for j in range(7)]
    assert [e.exact for e in t.entries] == [Fraction(-j * (j + n - 1)) for j in range(7)]


def test_kernel_only():
    t = spectrum_analytic(CrossSection.circle(1), 0)
    assert list(t.eigenvalues) == [0]
    assert list(t.multiplicities) == [1]


def test_components_set_kernel_multiplicity():
    t = spectrum_analytic(CrossSection.circle(1, components=2), 2)
    assert t.multiplicities[0] == 2


def test_unsupported_kind():
    cs = CrossSection.sampled(np.ones(32))
    with pytest.raises(SpectrumError, match="analytic backend unavailable"):
        spectrum_analytic(cs, 2)


@pytest.mark.parametrize("cs,J", [(CrossSection.circle(1), 3), (CrossSection.circle(Fraction(13, 10)), 6),
                                  (CrossSection.circle(0.8), 5), (CrossSection.sphere(2), 4)])
def test_eigenvectors_solve_discrete_operator(cs, J):
    t = spectrum_analytic(cs, J)
    resid = t.apply_laplacian(t.basis.T) - t.column_eigenvalues[:, None] * t.basis.T
    scale = np.maximum(1, np.abs(t.column_eigenvalues))
    assert np.all(np.linalg.norm(resid, axis=1) < 1e-8 * scale)
    gram = t.basis.T @ (t.weights[:, None] * t.basis)
    assert np.abs(gram - np.eye(t.size)).max() < 1e-10


def test_circle_cosine_is_eigenfunction():
    # independent check: second difference of cos(jy/rho) on a fine grid
    rho = 1.3
    t = spectrum_analytic(CrossSection.circle(rho), 3)
    y = np.linspace(0, 2 * np.pi * rho, 4001)
    h = y[1] - y[0]
    for j in range(4):
        e = np.cos(j * y / rho)
        d2 = (e[2:] - 2 * e[1:-1] + e[:-2]) / h**2
        assert np.allclose(d2, t.eigenvalues[j] * e[1:-1], atol=1e-5)


def test_table_serialises():
    t = spectrum_analytic(CrossSection.circle(1), 2)
    d = json.loads(json.dumps(t.to_dict()))
    assert [e["lambda"] for e in d["entries"]] == [0.0, -1.0, -4.0]
    assert [e["mult"] for e in d["entries"]] == [1, 2, 2]


@given(st.integers(1, 40), st.integers(1, 40))
def test_circle_spectrum_exact_for_rational_rho(num, den):
    rho = Fraction(num, den)
    t = spectrum_analytic(CrossSection.circle(rho), 4)
    assert [e.exact * rho**2 for e in t.entries] == [-(j**2) for j in range(5)]


def test_numeric_constant_metric_matches_unit_circle():
    t = spectrum_numeric(CrossSection.sampled(np.ones(256)), 3, order=4)
    assert abs(t.eigenvalues[1] + 1) < 1e-6
    assert t.eigenvalues[0] == 0.0


def test_numeric_second_order_convergence():
    errs = []
    for N in (64, 128, 256):
        t = spectrum_numeric(CrossSection.sampled(np.ones(N)), 2)
        errs.append(abs(t.eigenvalues[1] + 1))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.5 <= r <= 4.5 for r in ratios)


def test_numeric_multiplicity_and_guard():
    t = spectrum_numeric(CrossSection.sampled(np.ones(64)), 1)
    assert list(t.multiplicities) == [1, 2]
    with pytest.raises(SpectrumError, match="grid resolution"):
        spectrum_numeric(CrossSection.sampled(np.ones(16)), 5)


def test_numeric_variable_metric_is_consistent():
    y = np.arange(128) * 2 * np.pi / 128
    t = spectrum_numeric(CrossSection.sampled(1 + 0.3 * np.cos(y)), 4)
    assert all(a > b for a, b in zip(t.eigenvalues, t.eigenvalues[1:]))
    resid = t.apply_laplacian(t.basis.T) - t.column_eigenvalues[:, None] * t.basis.T
    assert np.abs(resid).max() < 1e-8 * max(1, abs(t.eigenvalues[-1]))


def test_invalid_cross_sections():
    with pytest.raises(Exception):
        CrossSection.circle(-1)
    with pytest.raises(Exception):
        CrossSection.sampled(np.array([1.0, -1.0] * 8))
    with pytest.raises(Exception):
        CrossSection.sampled(np.ones(4))
