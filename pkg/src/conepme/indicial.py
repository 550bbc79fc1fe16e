"""Indicial roots, weight intervals and parameter admissibility.

For a cross-section eigenvalue ``lambda_j`` the conormal symbol of the cone
Laplacian acts on the eigenspace as the scalar polynomial
``z**2 - (n - 1) z + lambda_j`` whose roots are

    q_j^(+/-) = (n - 1)/2 +/- sqrt(((n - 1)/2)**2 - lambda_j).

Everything downstream (weight windows, asymptotic labels, fit predictions)
is phrased in terms of these roots. Root arithmetic is exact when the
spectrum is rational and the discriminant is a perfect square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import ConstraintError, IndicialError
from .spectrum import SpectrumTable

__all__ = [
    "IndicialRoot",
    "Pole",
    "IndicialChart",
    "ParameterSet",
    "ConstraintCheck",
    "DomainSpec",
    "InterpolationWindow",
    "indicial_roots",
    "mellin_symbol",
    "mellin_symbol_inverse",
    "apply_mellin_symbol",
    "midpoint_gamma",
    "check_parameters",
    "validate_parameters",
    "interpolation_window",
    "membership_exponent_test",
    "compare",
]

BAND = 1e-12


def _exact(x) -> Fraction | None:
    if isinstance(x, Rational):
        return Fraction(x)
    return None


def compare(a, b, band: float = BAND) -> int:
    """Sign of ``a - b``; exact for rationals, else 0 inside a relative band."""
    ea, eb = _exact(a), _exact(b)
    if ea is not None and eb is not None:
        return (ea > eb) - (ea < eb)
    fa, fb = float(a), float(b)
    if abs(fa - fb) <= band * max(1.0, abs(fa), abs(fb)):
        return 0
    return 1 if fa > fb else -1


def _sqrt_exact(x: Fraction) -> Fraction | None:
    if x < 0:
        return None
    num, den = x.numerator, x.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Fraction(rn, rd)
    return None


@dataclass(frozen=True)
class IndicialRoot:
    """The pair ``q_j^-`` <= ``q_j^+`` attached to eigenvalue ``lambda_j``.

    ``minus``/``plus`` hold exact :class:`~fractions.Fraction` values when
    available and floats otherwise; ``order`` is the pole order of the
    inverted symbol at the roots (2 only when they coincide).
    """

    j: int
    minus: float | Fraction
    plus: float | Fraction
    order: int

    @property
    def q_minus(self) -> float:
        return float(self.minus)

    @property
    def q_plus(self) -> float:
        return float(self.plus)


@dataclass(frozen=True)
class Pole:
    """A distinct pole of the inverted symbol.

    ``sign`` is ``-1`` for ``q_j^-``, ``+1`` for ``q_j^+`` and ``0`` for the
    double pole at the origin when ``n == 1``.
    """

    j: int
    sign: int
    value: float | Fraction
    order: int

    @property
    def name(self) -> str:
        if self.sign == 0:
            return f"q_{self.j}"
        return f"q_{self.j}^{'-' if self.sign < 0 else '+'}"

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True, eq=False)
class IndicialChart:
    """Indicial data of a cone with cross-section spectrum ``spectrum``.

    Attributes
    ----------
    n : int
        Cross-section dimension.
    roots : tuple of IndicialRoot
        One entry per spectrum entry.
    k : int
        Largest index with ``q_k^- > -2``.
    spectrum : SpectrumTable
    k_resolved : bool
        False when the table ends before any root reaches ``-2``; ``k`` is
        then only a lower bound and weight arithmetic refuses to run.
    """

    n: int
    roots: tuple[IndicialRoot, ...]
    k: int
    spectrum: SpectrumTable
    k_resolved: bool = True

    def require_k(self) -> None:
        if not self.k_resolved:
            raise IndicialError(
                "spectrum table too short to locate k: no root q_j^- <= -2, "
                "increase J_max")

    def q_minus(self, j: int) -> float:
        return self.roots[j].q_minus

    def q_plus(self, j: int) -> float:
        return self.roots[j].q_plus

    @property
    def column_q_minus(self) -> np.ndarray:
        return np.array([r.q_minus for r in self.roots])[self.spectrum.column_entry]

    @property
    def column_q_plus(self) -> np.ndarray:
        return np.array([r.q_plus for r in self.roots])[self.spectrum.column_entry]

    def poles(self) -> list[Pole]:
        """All distinct poles, in increasing order of value."""
        out = []
        for r in self.roots:
            if r.order == 2:
                out.append(Pole(r.j, 0, r.minus, 2))
            else:
                out.append(Pole(r.j, -1, r.minus, 1))
                out.append(Pole(r.j, 1, r.plus, 1))
        return sorted(out, key=float)

    def pole_at(self, value, tol: float = 1e-10) -> Pole | None:
        """The pole within ``tol`` of ``value``, if any (first in increasing
        order)."""
        for p in self.poles():
            if abs(float(p) - float(value)) <= tol:
                return p
        return None

    def minus_pole(self, j: int) -> Pole:
        r = self.roots[j]
        return Pole(j, 0 if r.order == 2 else -1, r.minus, r.order)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "roots": [
                {"j": r.j, "lambda": self.spectrum.entries[r.j].eigenvalue,
                 "q_minus": r.q_minus, "q_plus": r.q_plus, "pole_order": r.order,
                 "exact": isinstance(r.minus, Fraction)}
                for r in self.roots
            ],
        }


def indicial_roots(table: SpectrumTable, n: int | None = None) -> IndicialChart:
    """Compute the indicial roots for every eigenvalue in ``table``.

    Parameters
    ----------
    table : SpectrumTable
    n : int, optional
        Cross-section dimension; must match ``table.cross_section``.

    Raises
    ------
    IndicialError
        If ``n`` disagrees with the cross-section.
    """
    dim = table.cross_section.dimension
    if n is None:
        n = dim
    if n != dim:
        raise IndicialError(f"n={n} does not match the cross-section dimension {dim}")
    half = Fraction(n - 1, 2)
    roots = []
    for e in table.entries:
        if e.exact is not None:
            disc = half**2 - e.exact
            rt = _sqrt_exact(disc)
            if rt is not None:
                qm, qp = half - rt, half + rt
            else:
                d = math.sqrt(float(disc))
                qm, qp = float(half) - d, float(half) + d
        else:
            d = math.sqrt(float(half) ** 2 - e.eigenvalue)
            qm, qp = float(half) - d, float(half) + d
        order = 2 if (n == 1 and e.j == 0) else 1
        if order == 2:
            qm = qp = Fraction(0)
        roots.append(IndicialRoot(e.j, qm, qp, order))
    below = [r.j for r in roots if compare(r.minus, -2) <= 0]
    if below:
        return IndicialChart(n, tuple(roots), below[0] - 1, table)
    return IndicialChart(n, tuple(roots), len(roots) - 1, table, k_resolved=False)


def mellin_symbol(chart: IndicialChart, z, *, per: str = "entry") -> np.ndarray:
    """Eigenbasis-diagonal values of the conormal symbol at ``z``."""
    lam = chart.spectrum.eigenvalues
    if per == "column":
        lam = chart.spectrum.column_eigenvalues
    return z * z - (chart.n - 1) * z + lam


def mellin_symbol_inverse(chart: IndicialChart, z, *, per: str = "entry") -> np.ndarray:
    """Diagonal values ``1/((z - q_j^+)(z - q_j^-))`` of the inverted symbol.

    Raises
    ------
    IndicialError
        "evaluation at pole" when ``z`` is within ``1e-12`` of a root.
    """
    qm = np.array([r.q_minus for r in chart.roots])
    qp = np.array([r.q_plus for r in chart.roots])
    if min(np.abs(z - qm).min(), np.abs(z - qp).min()) <= 1e-12:
        raise IndicialError("evaluation at pole")
    vals = 1.0 / ((z - qp) * (z - qm))
    if per == "column":
        vals = vals[chart.spectrum.column_entry]
    return vals


def apply_mellin_symbol(table: SpectrumTable, n: int, z, values) -> np.ndarray:
    """Apply the conormal symbol at ``z`` to nodal values via the discrete
    cross-section Laplacian."""
    values = np.asarray(values, dtype=float)
    return (z * z - (n - 1) * z) * values + table.apply_laplacian(values)


def membership_exponent_test(q_exponent, sigma, n: int) -> bool:
    """True iff ``x^(-q) e(y)`` near the tip lies in the weight-``sigma`` space,
    that is ``q < (n+1)/2 - sigma``."""
    return compare(q_exponent, Fraction(n + 1, 2) - _as_num(sigma)) < 0


def _as_num(x):
    e = _exact(x)
    return e if e is not None else float(x)


@dataclass(frozen=True)
class ParameterSet:
    """Weight ``gamma``, integrability ``p``, time integrability ``q``,
    smoothness ``s`` and the embedding slack ``epsilon``."""

    gamma: float | Fraction
    p: float | Fraction
    q: float | Fraction
    s: float | Fraction
    epsilon: float | Fraction = 0.01

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("gamma", "p", "q", "s", "epsilon")}


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    margin: float
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "margin": self.margin, "detail": self.detail}


def _lower_endpoint(n, gamma):
    return Fraction(n + 1, 2) - _as_num(gamma) - 2


def midpoint_gamma(chart: IndicialChart):
    """A default weight: lower end of the window placed halfway in
    ``(-2, q_k^-)``, nudged off any pole the upper end would hit and off
    every ``pole - 1`` (where the warped corrections change type)."""
    chart.require_k()
    qk = chart.roots[chart.k].minus
    for frac in (Fraction(1, 2), Fraction(3, 8), Fraction(5, 8), Fraction(1, 4), Fraction(3, 4)):
        lo = -2 + frac * (_as_num(qk) + 2)
        gamma = Fraction(chart.n + 1, 2) - 2 - lo
        if (chart.pole_at(float(lo + 2), tol=1e-6) is None
                and chart.pole_at(float(lo + 1), tol=1e-6) is None):
            return gamma if isinstance(gamma, Fraction) else float(gamma)
    raise IndicialError("could not place a default weight off the poles")


def check_parameters(chart: IndicialChart, params: ParameterSet) -> list[ConstraintCheck]:
    """Evaluate every admissibility constraint without raising."""
    chart.require_k()
    n = chart.n
    p, q, s = (_as_num(params.p), _as_num(params.q), _as_num(params.s))
    lo = _lower_endpoint(n, params.gamma)
    hi = lo + 2
    qk = chart.roots[chart.k].minus
    checks = []

    def add(name, lhs, rhs, detail):
        # constraint reads lhs < rhs
        c = compare(lhs, rhs)
        tag = " (on-boundary)" if c == 0 else ""
        checks.append(ConstraintCheck(name, c < 0, float(rhs) - float(lhs), detail + tag))

    add("gamma_new", -2, lo, "(n+1)/2-gamma-2 > -2")
    add("gamma_new", lo, qk, f"(n+1)/2-gamma-2 < q_{chart.k}^-")
    hit = chart.pole_at(float(hi), tol=BAND)
    exact_hit = any(compare(getattr(r, side), hi) == 0
                    for r in chart.roots for side in ("minus", "plus"))
    dist = min(abs(float(hi) - float(pp)) for pp in chart.poles())
    bad = hit is not None or exact_hit
    checks.append(ConstraintCheck(
        "pole-hit", not bad, dist,
        "(n+1)/2-gamma is not a pole" + (f" (hits {hit.name})" if hit else "")))
    add("pq", 1, p, "p > 1")
    add("pq", 1, q, "q > 1")
    add("pq", Fraction(n + 1) / p + 2 / q if isinstance(p, Fraction) and isinstance(q, Fraction)
        else (n + 1) / float(p) + 2 / float(q), 1, "(n+1)/p + 2/q < 1")
    add("pq", lo + 4 / q if isinstance(lo, Fraction) and isinstance(q, Fraction)
        else float(lo) + 4 / float(q), 0, "(n+1)/2-gamma-2 + 4/q < 0")
    thresh = -1 + (n + 1) / float(p) + 2 / float(q)
    if all(isinstance(v, Fraction) for v in (p, q, s)):
        thresh = -1 + Fraction(n + 1) / p + 2 / q
    add("s", thresh, s, "s > -1 + (n+1)/p + 2/q")
    return checks


@dataclass(frozen=True)
class DomainSpec:
    """Outcome of a successful parameter validation.

    Attributes
    ----------
    interval : (float, float)
        The weight window ``I_gamma``.
    included : tuple of Pole
        Labels ``q_j^-`` for ``j = 1..k`` contributing asymptotic spaces.
    constant_label : Pole
        The root at the origin carrying the space of tip constants; for
        ``n = 1`` only its log-free part is used.
    log_free_constants : bool
    excluded : tuple of Pole
        Roots ``q_j^+`` inside ``I_gamma``; they carry the zero space.
    poles_in_interval : tuple of Pole
        Every pole inside ``I_gamma`` (the maximal-domain composition).
    minimal : dict
        Smoothness and weight of the minimal domain.
    legacy : bool
        True when ``k = 0``, the classical weight regime.
    checks : tuple of ConstraintCheck
    """

    interval: tuple[float, float]
    included: tuple[Pole, ...]
    constant_label: Pole
    log_free_constants: bool
    excluded: tuple[Pole, ...]
    poles_in_interval: tuple[Pole, ...]
    minimal: dict
    legacy: bool
    checks: tuple[ConstraintCheck, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "interval": list(self.interval),
            "included": [p.name for p in self.included],
            "constants": {"label": self.constant_label.name,
                          "log_free": self.log_free_constants},
            "excluded": [p.name for p in self.excluded],
            "poles_in_interval": [p.name for p in self.poles_in_interval],
            "minimal": self.minimal,
            "legacy": self.legacy,
            "checks": [c.to_dict() for c in self.checks],
        }


def validate_parameters(chart: IndicialChart, params: ParameterSet) -> DomainSpec:
    """Check admissibility and compose the domain.

    Raises
    ------
    ConstraintError
        Naming every violated constraint (``gamma_new``, ``pq``, ``s``,
        ``pole-hit``).
    """
    checks = check_parameters(chart, params)
    failed = [c for c in checks if not c.passed]
    if failed:
        names = sorted({c.name for c in failed})
        msg = "; ".join(f"{c.name}: {c.detail}" for c in failed)
        raise ConstraintError(f"parameter constraints violated: {msg}", names)
    lo = _lower_endpoint(chart.n, params.gamma)
    hi = lo + 2
    inside = tuple(p for p in chart.poles()
                   if compare(lo, p.value) < 0 and compare(p.value, hi) < 0)
    included = tuple(chart.minus_pole(j) for j in range(1, chart.k + 1))
    excluded = tuple(p for p in inside if p.sign > 0)
    return DomainSpec(
        interval=(float(lo), float(hi)),
        included=included,
        constant_label=chart.minus_pole(0),
        log_free_constants=chart.n == 1,
        excluded=excluded,
        poles_in_interval=inside,
        minimal={"smoothness": float(params.s) + 2, "weight": float(params.gamma) + 2},
        legacy=chart.k == 0,
        checks=tuple(checks),
    )


@dataclass(frozen=True)
class InterpolationWindow:
    """Embedding arithmetic of the time-trace space.

    ``r`` is the number of asymptotic labels visible at weight
    ``bound = (n+1)/2 - gamma - 2 + 2/q + epsilon``; ``direct`` is true when
    all ``k`` labels are visible. ``s0`` and ``gamma0`` are the smoothness
    and weight of the coefficient space.
    """

    r: int
    bound: float
    direct: bool
    s0: float
    gamma0: float

    def to_dict(self) -> dict:
        return {"r": self.r, "bound": self.bound, "direct": self.direct,
                "s0": self.s0, "gamma0": self.gamma0}


def interpolation_window(chart: IndicialChart, params: ParameterSet) -> InterpolationWindow:
    """Index ``r`` with ``max(-2, q_{r+1}^-) < bound < q_r^-``.

    Raises
    ------
    IndicialError
        "adjust epsilon" when ``bound`` coincides with some ``q_j^-`` or
        leaves ``(-2, 0)``.
    """
    chart.require_k()
    n = chart.n
    eps = _as_num(params.epsilon)
    q = _as_num(params.q)
    lo = _lower_endpoint(n, params.gamma)
    if all(isinstance(v, Fraction) for v in (lo, q, eps)):
        bound = lo + 2 / q + eps
    else:
        bound = float(lo) + 2 / float(q) + float(eps)
    for r in chart.roots:
        if compare(bound, r.minus) == 0:
            raise IndicialError(f"adjust epsilon: window bound hits {r.j}-th root q^-")
    if compare(bound, 0) >= 0 or compare(bound, -2) <= 0:
        raise IndicialError("adjust epsilon: window bound outside (-2, 0)")
    r = max(j.j for j in chart.roots if compare(j.minus, bound) > 0)
    r = min(r, chart.k)
    s0 = float(params.s) + 2 - 2 / float(q) - float(eps)
    g_trace = float(params.gamma) + 2 - 2 / float(q) - float(eps)
    q1 = chart.q_minus(1) if len(chart.roots) > 1 else -np.inf
    gamma0 = min(g_trace, (n + 1) / 2 - q1 - float(eps))
    return InterpolationWindow(r, float(bound), r == chart.k, s0, gamma0)
