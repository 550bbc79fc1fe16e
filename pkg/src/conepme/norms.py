"""Weighted Mellin-Sobolev norms of gridded functions, integer smoothness.

For ``u`` sampled on log-radial nodes ``r = ln x`` and cross-section nodes,
the ``p``-th power of the ``H^{s,gamma}_p`` norm is

    sum_{k + |alpha| <= s} int |x^((n+1)/2 - gamma) omega (x d_x)^k D_y^alpha u|^p dr dy

with ``x d_x = d_r``. The ``r`` integral is a trapezoid rule on the
(uniform) log grid, so the measure ``dx/x`` is handled exactly.

Divergence toward the tip is judged from partial integrals over
``[x_c, 1]`` for ``x_c`` on a decade ladder, together with a fit of the
integrand density to ``exp(beta r) |r|^c``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable

import numpy as np

from .errors import NormError
from .geometry import cutoff
from .indicial import IndicialChart, membership_exponent_test
from .spectrum import SpectrumTable

__all__ = [
    "GriddedFunction",
    "NormDiagnosis",
    "mellin_norm",
    "MembershipRow",
    "membership_suite",
    "membership_csv",
    "SubmultiplicativityReport",
    "submultiplicativity_smoke",
    "random_smooth_pairs",
    "LADDER",
]

LADDER = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
CAUCHY_TOL = 1e-3
RATE_TOL = 0.05
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GriddedFunction:
    """Samples of a function on ``[x_min, 1] x cross-section``.

    Attributes
    ----------
    r : ndarray, shape (N_r,)
        Strictly increasing log-radial nodes ending at or below 0.
    values : ndarray, shape (N_r, M)
        Values at ``(r_i, y_m)``.
    table : SpectrumTable
        Supplies cross-section quadrature weights and derivative matrices.
    collar : bool
        True when the cutoff ``omega`` is already applied to ``values``.
    """

    r: np.ndarray
    values: np.ndarray
    table: SpectrumTable
    collar: bool = False

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) <= 0):
            raise NormError("log-radial nodes must be strictly increasing")
        if not np.all(np.isfinite(r)) or r[-1] > 1e-12:
            raise NormError("log-radial nodes must lie in [ln x_min, 0] with x_min > 0")
        if not self.table.has_nodes:
            raise NormError("the cross-section table has no nodal basis")
        if vals.shape != (r.size, self.table.weights.size):
            raise NormError(f"values have shape {vals.shape}, expected {(r.size, self.table.weights.size)}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, f: Callable, table: SpectrumTable, x_min: float = 1e-6,
                      n_r: int = 1400, collar: bool = False) -> "GriddedFunction":
        """Sample ``f(x, nodes)`` (broadcast over ``x[:, None]``) on a uniform log grid."""
        if not x_min > 0:
            raise NormError("x_min must be positive")
        r = np.linspace(math.log(x_min), 0.0, n_r)
        x = np.exp(r)
        vals = np.asarray(f(x[:, None], table.nodes), dtype=float)
        vals = np.broadcast_to(vals, (n_r, table.weights.size)).copy()
        return cls(r, vals, table, collar)

    @property
    def x(self) -> np.ndarray:
        return np.exp(self.r)

    @property
    def x_min(self) -> float:
        return float(np.exp(self.r[0]))

    def cut(self) -> np.ndarray:
        """Values with the cutoff applied."""
        if self.collar:
            return self.values
        return cutoff(self.x)[:, None] * self.values

    def _compatible(self, other: "GriddedFunction"):
        if self.r.shape != other.r.shape or not np.allclose(self.r, other.r, rtol=0, atol=1e-13):
            raise NormError("gridded functions live on different radial grids")
        if self.values.shape[1] != other.values.shape[1]:
            raise NormError("gridded functions live on different cross-section grids")

    def __mul__(self, other):
        if isinstance(other, GriddedFunction):
            self._compatible(other)
            return GriddedFunction(self.r, self.values * other.values, self.table,
                                   self.collar or other.collar)
        return GriddedFunction(self.r, self.values * float(other), self.table, self.collar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class NormDiagnosis:
    """How the partial integrals behave as the lower cut ``x_c`` shrinks.

    Attributes
    ----------
    verdict : {"convergent", "divergent-with-rate"}
    kind : {"power", "log"} or None
        Divergence kind; ``None`` when convergent.
    rate : float
        Fitted ``beta`` in ``density ~ exp(beta r) |r|^c``; ``beta > 0``
        means decay toward the tip.
    log_rate : float
        Fitted ``c``.
    increment : float
        Relative change of the partial integral between the two smallest
        ladder cuts.
    ladder, partials : tuple of float
        Cuts and the corresponding partial integrals of the p-th power.
    """

    verdict: str
    kind: str | None
    rate: float
    log_rate: float
    increment: float
    ladder: tuple = field(default=())
    partials: tuple = field(default=())

    @property
    def convergent(self) -> bool:
        return self.verdict == "convergent"


def _derivative_words(dim: int, order: int):
    return list(combinations_with_replacement(range(dim), order)) if order else [()]


def _density(u: GriddedFunction, s: int, gamma: float, p: float, n: int) -> np.ndarray:
    """Cross-section integral of all ``|.|^p`` terms at each radial node."""
    if u.r.size < s + 2:
        raise NormError(f"insufficient grid: need at least {s + 2} radial nodes")
    table = u.table
    if s > 0 and table.weights.size < s + 2:
        raise NormError(f"insufficient grid: need at least {s + 2} cross-section nodes")
    if s > 0 and not table.derivatives:
        raise NormError("insufficient grid: no cross-section derivative matrices")
    # the weight and cutoff multiply the differentiated function
    weight = u.x ** ((n + 1) / 2 - gamma)
    if not u.collar:
        weight = weight * cutoff(u.x)
    radial = [u.values]
    for _ in range(s):
        radial.append(np.gradient(radial[-1], u.r, axis=0, edge_order=2))
    radial = [weight[:, None] * f for f in radial]
    dim = len(table.derivatives)
    density = np.zeros(u.r.size)
    for k, f in enumerate(radial):
        for order in range(s - k + 1):
            for word in _derivative_words(dim, order):
                g = f
                for d in word:
                    g = g @ table.derivatives[d].T
                density += np.abs(g) ** p @ table.weights
    return density


def _partial(r, density, r_cut):
    sel = r >= r_cut - 1e-12
    return float(np.trapezoid(density[sel], r[sel]))


def _fit_rate(r, density, r_lo, r_hi):
    sel = (r >= r_lo - 1e-12) & (r <= r_hi + 1e-12) & (density > 0)
    if sel.sum() < 3:
        return math.inf, 0.0
    rs = r[sel]
    design = np.column_stack([np.ones_like(rs), rs, np.log(np.abs(rs))])
    coef, *_ = np.linalg.lstsq(design, np.log(density[sel]), rcond=None)
    return float(coef[1]), float(coef[2])


def mellin_norm(u: GriddedFunction, s: int, gamma: float, p: float, n: int,
                ladder=LADDER) -> tuple[float, NormDiagnosis]:
    """``H^{s,gamma}_p`` norm of ``u`` with a tip divergence diagnosis.

    Returns
    -------
    (float, NormDiagnosis)
        The p-th root of the summed integrals, including a tail estimate
        below ``x_min`` for power-law decay; ``inf`` when divergent.

    Raises
    ------
    NormError
        For negative or fractional ``s`` and grids too coarse for ``s``-fold
        differencing or for at least two ladder cuts.
    """
    if int(s) != s or s < 0:
        raise NormError("smoothness must be a non-negative integer")
    if not p >= 1:
        raise NormError("p must be at least 1")
    s = int(s)
    density = _density(u, s, gamma, p, n)
    cuts = tuple(c for c in ladder if c >= u.x_min * (1 - 1e-9))
    if len(cuts) < 2:
        raise NormError("insufficient grid: x_min must reach at least two ladder cuts")
    r = u.r
    partials = tuple(_partial(r, density, math.log(c)) for c in cuts)
    total = _partial(r, density, r[0])
    if total == 0.0:
        return 0.0, NormDiagnosis("convergent", None, math.inf, 0.0, 0.0, cuts, partials)
    increment = abs(partials[-1] - partials[-2]) / abs(partials[-1])
    beta, c = _fit_rate(r, density, math.log(cuts[-1]), math.log(cuts[0]))
    if beta > RATE_TOL or increment < CAUCHY_TOL:
        tail = density[0] / beta if math.isfinite(beta) and beta > RATE_TOL else 0.0
        value = (total + tail) ** (1 / p)
        return value, NormDiagnosis("convergent", None, beta, c, increment, cuts, partials)
    kind = "log" if abs(beta) <= RATE_TOL else "power"
    return math.inf, NormDiagnosis("divergent-with-rate", kind, beta, c, increment, cuts, partials)


@dataclass(frozen=True)
class MembershipRow:
    exponent: float
    log_power: int
    sigma: float
    analytic: str
    quadrature: str
    value: float
    rate: float

    @property
    def agree(self) -> bool:
        return self.analytic == self.quadrature

    @property
    def term(self) -> str:
        return f"x^{self.exponent:.6g}*ln^{self.log_power}(x)"


def membership_suite(chart: IndicialChart, terms, sigma: float, p: float, n: int | None = None,
                     *, s: int = 0, x_min: float = 1e-6, n_r: int = 1400,
                     column: int = 0) -> list[MembershipRow]:
    """Analytic versus quadrature membership of ``omega x^e ln^l(x) e_column``.

    A term lies in ``H^{s,sigma}_p`` exactly when ``-e < (n+1)/2 - sigma``;
    log factors do not matter off the boundary. Terms within ``1e-9`` of the
    boundary are reported ``"indeterminate"`` on both sides.
    """
    table = chart.spectrum
    n = chart.n if n is None else n
    shape = table.basis[:, column]
    rows = []
    for e, ell in terms:
        e, ell = float(e), int(ell)
        margin = e - (sigma - (n + 1) / 2)
        if abs(margin) < BOUNDARY_TOL:
            rows.append(MembershipRow(e, ell, sigma, "indeterminate", "indeterminate", math.nan, math.nan))
            continue
        analytic = "convergent" if membership_exponent_test(-e, sigma, n) else "divergent"

        def f(x, nodes, e=e, ell=ell):
            return x**e * np.log(x) ** ell * shape[None, :]

        u = GriddedFunction.from_callable(f, table, x_min=x_min, n_r=n_r)
        value, diag = mellin_norm(u, s, sigma, p, n)
        verdict = "convergent" if diag.convergent else "divergent"
        rows.append(MembershipRow(e, ell, sigma, analytic, verdict, value, diag.rate))
    return rows


def membership_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["term", "sigma", "analytic", "quadrature", "value_or_rate"])
    for row in rows:
        out = row.value if row.quadrature == "convergent" else row.rate
        w.writerow([row.term, f"{row.sigma:.17g}", row.analytic, row.quadrature, f"{out:.17g}"])
    return buf.getvalue()


@dataclass(frozen=True)
class SubmultiplicativityReport:
    """Ratios ``||u v||_{s,gamma} / (||u||_{sigma,(n+1)/2} ||v||_{s,gamma})``."""

    ratios: tuple
    sigma: int
    bound: float = 100.0

    @property
    def max_ratio(self) -> float:
        return max(self.ratios)

    @property
    def finite(self) -> bool:
        return all(math.isfinite(q) for q in self.ratios)

    @property
    def bounded(self) -> bool:
        return bool(self.finite and self.max_ratio <= self.bound)

    def to_dict(self) -> dict:
        return {"ratios": list(self.ratios), "sigma": self.sigma, "max_ratio": self.max_ratio,
                "finite": self.finite, "bounded": self.bounded}


def submultiplicativity_smoke(u, v, s: int, gamma: float, p: float, n: int) -> SubmultiplicativityReport:
    """Sample the multiplication bound on pairs ``(u_i, v_i)``.

    ``u`` is measured in ``H^{sigma,(n+1)/2}_p`` with the integer
    ``sigma = s + 1 + floor((n+1)/p)``, ``v`` and the product in
    ``H^{s,gamma}_p``. Single functions or equal-length sequences are
    accepted.

    Raises
    ------
    NormError
        When a factor diverges in its norm.
    """
    us = [u] if isinstance(u, GriddedFunction) else list(u)
    vs = [v] if isinstance(v, GriddedFunction) else list(v)
    if len(us) != len(vs):
        raise NormError("need as many u samples as v samples")
    sigma = s + 1 + int(math.floor((n + 1) / p))
    ratios = []
    for a, b in zip(us, vs):
        na, da = mellin_norm(a, sigma, (n + 1) / 2, p, n)
        nb, db = mellin_norm(b, s, gamma, p, n)
        if not da.convergent:
            raise NormError("precondition violated: u diverges in its norm")
        if not db.convergent:
            raise NormError("precondition violated: v diverges in its norm")
        # the cutoff enters the norm once, so multiply raw values
        prod = GriddedFunction(a.r, a.values * b.values, a.table, a.collar and b.collar)
        nab, _ = mellin_norm(prod, s, gamma, p, n)
        ratios.append(float(nab / (na * nb)) if na * nb > 0 else 0.0)
    return SubmultiplicativityReport(tuple(ratios), sigma)


def random_smooth_pairs(table: SpectrumTable, count: int, gamma: float, n: int,
                        rng: np.random.Generator, *, x_min: float = 1e-6, n_r: int = 1400):
    """Random ``(u, v)`` with ``u`` vanishing linearly at the tip and ``v``
    decaying strictly faster than the ``gamma`` threshold."""
    threshold = gamma - (n + 1) / 2
    cols = table.basis.shape[1]
    us, vs = [], []
    for _ in range(count):
        cu = rng.normal(size=min(cols, 3))
        cv = rng.normal(size=min(cols, 3))
        ev = max(threshold, 0.0) + rng.uniform(0.3, 1.5)
        prof_u = 1.5 + np.tanh(table.basis[:, :cu.size] @ cu)
        prof_v = 1.5 + np.tanh(table.basis[:, :cv.size] @ cv)

        def fu(x, nodes, pu=prof_u):
            return x * (1 + x) * pu[None, :]

        def fv(x, nodes, pv=prof_v, ev=ev):
            return x**ev * np.cos(x) * pv[None, :]
        us.append(GriddedFunction.from_callable(fu, table, x_min, n_r))
        vs.append(GriddedFunction.from_callable(fv, table, x_min, n_r))
    return us, vs
