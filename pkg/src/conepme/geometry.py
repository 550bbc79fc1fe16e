"""Cone geometry: cross-sections, warping data and the tip cutoff."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import ConeError, SpectrumError

__all__ = [
    "CrossSection",
    "WarpData",
    "ConeGeometry",
    "cutoff",
    "smoothstep3",
]


@dataclass(frozen=True, eq=False)
class CrossSection:
    """Description of the cross-section ``Y`` of a cone ``[0, 1) x Y``.

    Use the constructors :meth:`circle`, :meth:`sphere` and :meth:`sampled`
    rather than building instances by hand.

    Attributes
    ----------
    kind : {"circle", "sphere", "sampled1d"}
    rho : real or None
        Circle radius; the circumference is ``2*pi*rho``. Integers and
        :class:`fractions.Fraction` values keep root computations exact.
    dimension : int
        Dimension ``n`` of the cross-section.
    metric : ndarray or None
        Samples of the metric coefficient ``a(y)`` in ``h = a(y) dy^2`` on a
        uniform periodic grid of ``[0, period)``.
    period : float
        Parameter period of the sampled curve.
    components : int
        Number of connected components.
    """

    kind: str
    rho: float | Fraction | None = None
    dimension: int = 1
    metric: np.ndarray | None = None
    period: float = 2 * np.pi
    components: int = 1

    def __post_init__(self):
        if self.kind not in ("circle", "sphere", "sampled1d"):
            raise SpectrumError(f"unknown cross-section kind {self.kind!r}")
        if self.components < 1:
            raise SpectrumError("components must be at least 1")
        if self.kind == "circle":
            if self.rho is None or not self.rho > 0:
                raise SpectrumError("circumference must be positive")
            if self.dimension != 1:
                raise SpectrumError("a circle has dimension 1")
        elif self.kind == "sphere":
            if self.dimension < 2:
                raise SpectrumError("sphere dimension must be at least 2")
        else:
            a = np.asarray(self.metric, dtype=float)
            if a.ndim != 1 or a.size < 8:
                raise SpectrumError("sampled metric needs at least 8 samples")
            if np.any(a <= 0):
                raise SpectrumError("sampled metric must be strictly positive")
            if self.dimension != 1:
                raise SpectrumError("sampled cross-sections are 1-dimensional")
            object.__setattr__(self, "metric", a.copy())
            self.metric.setflags(write=False)

    @classmethod
    def circle(cls, rho=None, *, circumference=None, components=1):
        """Circle of radius ``rho`` (or of the given circumference)."""
        if (rho is None) == (circumference is None):
            raise SpectrumError("give exactly one of rho or circumference")
        if rho is None:
            rho = circumference / (2 * np.pi)
        return cls("circle", rho=rho, components=components)

    @classmethod
    def sphere(cls, n):
        """Unit round sphere ``S^n``."""
        return cls("sphere", dimension=int(n))

    @classmethod
    def sampled(cls, metric, period=2 * np.pi, components=1):
        """Closed curve with metric ``a(y) dy^2`` sampled uniformly."""
        return cls("sampled1d", metric=np.asarray(metric, float), period=period,
                   components=components)

    @property
    def n(self) -> int:
        return self.dimension

    @property
    def circumference(self) -> float | None:
        if self.kind != "circle":
            return None
        return 2 * np.pi * float(self.rho)

    @property
    def exact(self) -> bool:
        """True when the closed-form spectrum is rational."""
        if self.kind == "sphere":
            return True
        return self.kind == "circle" and isinstance(self.rho, Rational)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "components": self.components}
        if self.kind == "circle":
            d["rho"] = float(self.rho)
        elif self.kind == "sphere":
            d["n"] = self.dimension
        else:
            d["metric"] = self.metric.tolist()
            d["period"] = self.period
        return d


@dataclass(frozen=True, eq=False)
class WarpData:
    """First-order warping of the cone metric at the tip.

    Both quantities are given in the eigenbasis coordinates of a
    :class:`~conepme.spectrum.SpectrumTable` with ``K`` columns.

    Attributes
    ----------
    hprime : ndarray, shape (K,)
        Coefficients of the cross-section function ``H'(0, y)``.
    delta_prime : ndarray, shape (K, K)
        Matrix of the first-order variation of the cross-section Laplacian.
        It has no zero-order part, so it must annihilate constants.
    """

    hprime: np.ndarray
    delta_prime: np.ndarray

    def __post_init__(self):
        h = np.array(self.hprime, dtype=float)
        d = np.array(self.delta_prime, dtype=float)
        if h.ndim != 1 or d.shape != (h.size, h.size):
            raise ConeError("warp data shapes must be (K,) and (K, K)")
        h.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "hprime", h)
        object.__setattr__(self, "delta_prime", d)

    @classmethod
    def zero(cls, size):
        return cls(np.zeros(size), np.zeros((size, size)))

    @property
    def straight(self) -> bool:
        return not (np.any(self.hprime) or np.any(self.delta_prime))

    def check(self, table) -> None:
        """Validate the warp against a spectrum table.

        Raises
        ------
        ConeError
            If the sizes disagree or ``delta_prime`` does not annihilate
            the constant directions.
        """
        if self.hprime.size != table.size:
            raise ConeError(
                f"warp data has {self.hprime.size} coefficients, "
                f"table has {table.size} columns")
        kernel = table.columns_of(0)
        leak = np.abs(self.delta_prime[:, kernel]).max(initial=0.0)
        if leak > 1e-12:
            raise ConeError("delta_prime must annihilate constants "
                            f"(leak {leak:.3g})")


@dataclass(frozen=True, eq=False)
class ConeGeometry:
    """A cone over ``cross_section`` with optional warping at the tip."""

    cross_section: CrossSection
    warp: WarpData | None = field(default=None)

    @property
    def n(self) -> int:
        return self.cross_section.dimension

    @property
    def straight(self) -> bool:
        return self.warp is None or self.warp.straight


def smoothstep3(t):
    """Order-3 smoothstep: ``C^3`` ramp from 0 at ``t<=0`` to 1 at ``t>=1``."""
    t = np.clip(t, 0.0, 1.0)
    return t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)


def cutoff(x, inner=0.4, outer=0.9):
    """Tip cutoff, identically 1 on ``[0, inner]`` and 0 beyond ``outer``."""
    if not 0 < inner < outer:
        raise ValueError("need 0 < inner < outer")
    x = np.asarray(x, dtype=float)
    return 1.0 - smoothstep3((x - inner) / (outer - inner))
