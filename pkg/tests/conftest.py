from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings

from conepme.geometry import CrossSection
from conepme.indicial import indicial_roots
from conepme.spectrum import spectrum_analytic

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

RHO13 = Fraction(13, 10)


@pytest.fixture(scope="session")
def table13():
    return spectrum_analytic(CrossSection.circle(RHO13), 6)


@pytest.fixture(scope="session")
def chart13(table13):
    return indicial_roots(table13)


@pytest.fixture(scope="session")
def sphere2():
    return spectrum_analytic(CrossSection.sphere(2), 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)
