"""Truncated algebra of tip expansions.

An :class:`AsympExpansion` is a finite sum

    sum_k  x**e_k * (ln x)**l_k * c_k(y),      0 <= e_k < W,

with cross-section coefficients ``c_k`` stored in eigenbasis coordinates
of a :class:`~conepme.spectrum.SpectrumTable`. Products are formed by
adding exponents and log powers and multiplying coefficients pointwise on
the table's quadrature grid; terms with ``e >= W`` are dropped. With this
truncation, inversion and real powers reduce to finite series because the
non-constant part is nilpotent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.special import binom

from .errors import AlgebraError
from .indicial import IndicialChart, membership_exponent_test
from .spectrum import SpectrumTable

__all__ = [
    "Term",
    "AsympExpansion",
    "add",
    "multiply",
    "invert",
    "real_power",
    "apply_series",
    "weight_classify",
    "default_weight",
    "KEY_TOL",
]

KEY_TOL = 1e-10
PRUNE_TOL = 1e-14
LEADING_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Term:
    """One term ``x**exponent * (ln x)**log_power * coeff(y)``."""

    exponent: float
    log_power: int
    coeff: np.ndarray

    @property
    def key(self) -> tuple[float, int]:
        return (self.exponent, self.log_power)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeff))


def default_weight(chart: IndicialChart) -> float:
    """Truncation weight ``2 + |q_k^-|``."""
    return 2.0 + abs(chart.q_minus(chart.k))


def _collect(items, table, weight, max_log, scale=1.0):
    """Merge ``(exponent, log_power, coeff)`` triples into sorted terms."""
    cut = weight - KEY_TOL
    tol = PRUNE_TOL * max(1.0, scale)
    buckets: dict[int, list] = {}
    for e, l, c in items:
        if e > cut:
            continue
        if l > max_log:
            raise AlgebraError(f"log power {l} exceeds cap {max_log}: increase max_log")
        buckets.setdefault(l, []).append((float(e), np.asarray(c, dtype=float)))
    terms = []
    for l, group in buckets.items():
        group.sort(key=lambda t: t[0])
        head, acc = None, None
        for e, c in group:
            if head is not None and e - head <= KEY_TOL:
                acc = acc + c
                continue
            if head is not None:
                terms.append(Term(head, l, acc))
            head, acc = e, c.copy()
        if head is not None:
            terms.append(Term(head, l, acc))
    terms = [t for t in terms if t.norm >= tol]
    terms.sort(key=lambda t: (t.exponent, -t.log_power))
    for t in terms:
        t.coeff.setflags(write=False)
    return tuple(terms)


class AsympExpansion:
    """Immutable truncated expansion near the tip.

    Parameters
    ----------
    table : SpectrumTable
        Supplies the eigenbasis and the grid for pointwise products.
    terms : iterable of (exponent, log_power, coeff)
        Coefficients are eigenbasis vectors of length ``table.size``.
    weight : float
        Truncation weight ``W``; terms with exponent ``>= W`` are dropped.
    max_log : int
        Cap on log powers; exceeding it raises.

    Examples
    --------
    >>> from conepme.geometry import CrossSection
    >>> from conepme.spectrum import spectrum_analytic
    >>> t = spectrum_analytic(CrossSection.circle(1), 2)
    >>> one = AsympExpansion.constant(t, 1.0, weight=3)
    >>> x = AsympExpansion.monomial(t, 1.0, 0, one.terms[0].coeff, weight=3)
    >>> [round(s.exponent, 3) for s in (one + x).invert().terms]
    [0.0, 1.0, 2.0]
    """

    __slots__ = ("table", "weight", "max_log", "_terms")

    def __init__(self, table: SpectrumTable, terms: Iterable = (), weight: float = 3.0,
                 max_log: int = 3, *, _scale: float = 1.0):
        self.table = table
        self.weight = float(weight)
        self.max_log = int(max_log)
        items = []
        for t in terms:
            if isinstance(t, Term):
                items.append((t.exponent, t.log_power, t.coeff))
            else:
                e, l, c = t
                c = np.asarray(c, dtype=float)
                if c.shape != (table.size,):
                    raise AlgebraError(f"coefficient shape {c.shape} != ({table.size},)")
                if l < 0 or int(l) != l:
                    raise AlgebraError("log powers must be non-negative integers")
                items.append((e, int(l), c))
        self._terms = _collect(items, table, self.weight, self.max_log, _scale)

    # construction helpers
    @classmethod
    def constant(cls, table, value, weight=3.0, max_log=3):
        """The constant function ``value`` (scalar or nodal array)."""
        vals = np.broadcast_to(np.asarray(value, dtype=float), table.weights.shape)
        return cls(table, [(0.0, 0, table.to_coeffs(vals))], weight, max_log)

    @classmethod
    def monomial(cls, table, exponent, log_power, coeff, weight=3.0, max_log=3):
        return cls(table, [(exponent, log_power, coeff)], weight, max_log)

    @classmethod
    def mode(cls, table, exponent, column, amplitude=1.0, log_power=0, weight=3.0, max_log=3):
        """``amplitude * x**exponent * (ln x)**log_power`` times basis column."""
        c = np.zeros(table.size)
        c[column] = amplitude
        return cls(table, [(exponent, log_power, c)], weight, max_log)

    def _new(self, items, weight=None, scale=1.0):
        return AsympExpansion(self.table, items, self.weight if weight is None else weight,
                              self.max_log, _scale=scale)

    # inspection
    @property
    def terms(self) -> tuple[Term, ...]:
        return self._terms

    @property
    def keys(self) -> list[tuple[float, int]]:
        return [t.key for t in self._terms]

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, exponent, log_power=0) -> np.ndarray:
        """Coefficient stored at a key (zeros when absent)."""
        for t in self._terms:
            if t.log_power == log_power and abs(t.exponent - exponent) <= KEY_TOL:
                return np.array(t.coeff)
        return np.zeros(self.table.size)

    @property
    def max_coeff_norm(self) -> float:
        return max((t.norm for t in self._terms), default=0.0)

    def evaluate(self, x) -> np.ndarray:
        """Nodal values on the grid ``x`` (shape ``(len(x), M)``)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((x.size, self.table.weights.size))
        lx = np.log(x)
        for t in self._terms:
            out += np.outer(x**t.exponent * lx**t.log_power, self.table.to_nodal(t.coeff))
        return out

    def evaluate_coeffs(self, x) -> np.ndarray:
        """Eigenbasis coefficients at radii ``x`` (shape ``(len(x), K)``)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((x.size, self.table.size))
        lx = np.log(x)
        for t in self._terms:
            out += np.outer(x**t.exponent * lx**t.log_power, t.coeff)
        return out

    def allclose(self, other: "AsympExpansion", atol=1e-12) -> bool:
        diff = self - other
        return diff.max_coeff_norm <= atol

    def truncate(self, weight) -> "AsympExpansion":
        return self._new(self._terms, weight=min(weight, self.weight))

    # arithmetic
    def _check(self, other):
        if other.table is not self.table:
            raise AlgebraError("expansions live on different spectrum tables")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = AsympExpansion.constant(self.table, other, self.weight, self.max_log)
        if not isinstance(other, AsympExpansion):
            return NotImplemented
        self._check(other)
        scale = max(self.max_coeff_norm, other.max_coeff_norm)
        return self._new(list(self._terms) + list(other._terms),
                         weight=min(self.weight, other.weight), scale=scale)

    __radd__ = __add__

    def __neg__(self):
        return self._new([(t.exponent, t.log_power, -t.coeff) for t in self._terms])

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, factor: float) -> "AsympExpansion":
        return self._new([(t.exponent, t.log_power, factor * t.coeff) for t in self._terms])

    def times_function(self, nodal) -> "AsympExpansion":
        """Multiply every coefficient pointwise by a cross-section function."""
        nodal = np.asarray(nodal, dtype=float)
        tab = self.table
        items = [(t.exponent, t.log_power, tab.to_coeffs(tab.to_nodal(t.coeff) * nodal))
                 for t in self._terms]
        return self._new(items, scale=self.max_coeff_norm * float(np.abs(nodal).max(initial=0)))

    def shift(self, exponent: float = 0.0, log_power: int = 0) -> "AsympExpansion":
        """Multiply by ``x**exponent * (ln x)**log_power``."""
        return self._new([(t.exponent + exponent, t.log_power + log_power, t.coeff)
                          for t in self._terms])

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return self.scale(float(other))
        if not isinstance(other, AsympExpansion):
            return NotImplemented
        self._check(other)
        weight = min(self.weight, other.weight)
        tab = self.table
        vals_a = [tab.to_nodal(t.coeff) for t in self._terms]
        vals_b = [tab.to_nodal(t.coeff) for t in other._terms]
        # sum nodal products per output key before projecting once
        acc: dict[int, list] = {}
        for ta, va in zip(self._terms, vals_a):
            for tb, vb in zip(other._terms, vals_b):
                e = ta.exponent + tb.exponent
                if e > weight - KEY_TOL:
                    continue
                acc.setdefault(ta.log_power + tb.log_power, []).append((e, va * vb))
        items = []
        for l, group in acc.items():
            group.sort(key=lambda g: g[0])
            head, total = None, None
            for e, v in group:
                if head is not None and e - head <= KEY_TOL:
                    total = total + v
                    continue
                if head is not None:
                    items.append((head, l, tab.to_coeffs(total)))
                head, total = e, v.copy()
            if head is not None:
                items.append((head, l, tab.to_coeffs(total)))
        scale = self.max_coeff_norm * other.max_coeff_norm
        return self._new(items, weight=weight, scale=scale)

    __rmul__ = __mul__

    def __pow__(self, theta):
        return self.real_power(theta)

    # leading part
    def _leading(self):
        for t in self._terms:
            if t.exponent < -KEY_TOL:
                raise AlgebraError("not invertible in C(B): negative exponent present")
            if abs(t.exponent) <= KEY_TOL and t.log_power > 0:
                raise AlgebraError("not invertible in C(B): unbounded log term at the tip")
        lead = self.coefficient(0.0, 0)
        rest = self._new([t for t in self._terms if t.exponent > KEY_TOL])
        return self.table.to_nodal(lead), rest

    def _series_order(self, rest):
        if rest.is_zero():
            return 0
        if not math.isfinite(self.weight):
            raise AlgebraError("series operations need a finite truncation weight")
        e_min = min(t.exponent for t in rest.terms)
        return math.ceil(self.weight / e_min)

    def _normalised(self):
        """Split ``a = a0 (1 + y)`` with ``y`` free of tip constants."""
        a0, rest = self._leading()
        return a0, rest.times_function(1.0 / a0)

    def _one_plus_series(self, y, coeffs):
        """``sum_i coeffs[i] * y**i`` up to nilpotency."""
        power = AsympExpansion.constant(self.table, 1.0, self.weight, self.max_log)
        total = power.scale(coeffs(0))
        for i in range(1, self._series_order(y) + 1):
            power = power * y
            if power.is_zero():
                break
            total = total + power.scale(coeffs(i))
        return total

    def invert(self) -> "AsympExpansion":
        """Inverse in the truncated algebra.

        Writes ``a = a0 (1 + y)`` and sums ``a0**-1 * sum_i (-y)**i`` up to
        ``i = ceil(W / e_min(y))``, past which every power is truncated.
        """
        a0, _ = self._leading()
        if np.abs(a0).min() <= LEADING_TOL:
            raise AlgebraError("not invertible in C(B): leading coefficient vanishes")
        _, y = self._normalised()
        return self._one_plus_series(y, lambda i: (-1.0) ** i).times_function(1.0 / a0)

    def real_power(self, theta: float) -> "AsympExpansion":
        """``a**theta = a0**theta * sum_i binom(theta, i) y**i``."""
        a0, _ = self._leading()
        if a0.min() <= 0:
            raise AlgebraError("branch undefined: leading coefficient must be positive")
        _, y = self._normalised()
        return self._one_plus_series(y, lambda i: binom(theta, i)).times_function(a0**theta)

    # output
    def _mode_label(self, col):
        tab = self.table
        j = int(tab.column_entry[col])
        if tab.entries[j].multiplicity == 1:
            return f"mode {j}"
        return f"mode {j}.{col - int(tab.columns_of(j)[0])}"

    def render(self, digits: int = 6, tol: float = 1e-12) -> list[str]:
        """Human-readable ``a·x^e·ln^l(x)·[mode j]`` strings."""
        out = []
        for t in self._terms:
            for col in np.flatnonzero(np.abs(t.coeff) > tol):
                s = f"{t.coeff[col]:.{digits}g}·x^{t.exponent:.{digits}g}"
                if t.log_power:
                    s += f"·ln^{t.log_power}(x)"
                out.append(s + f"·[{self._mode_label(col)}]")
        return out

    def __repr__(self):
        body = " + ".join(self.render(4)) or "0"
        return f"AsympExpansion({body} + O(x^{self.weight:g}))"

    def to_dict(self) -> dict:
        return {
            "weight": self.weight,
            "max_log": self.max_log,
            "terms": [{"exponent": t.exponent, "log_power": t.log_power,
                       "coeff": t.coeff.tolist()} for t in self._terms],
        }

    @classmethod
    def from_dict(cls, table: SpectrumTable, data: dict) -> "AsympExpansion":
        return cls(table, [(d["exponent"], d["log_power"], d["coeff"]) for d in data["terms"]],
                   data["weight"], data["max_log"])


def apply_series(a: AsympExpansion, coefficient: Callable[[np.ndarray, int], np.ndarray],
                 order: int | None = None) -> AsympExpansion:
    """Evaluate ``f(a) = sum_i c_i(a0) (a - a0)**i`` in the truncated algebra.

    Parameters
    ----------
    a : AsympExpansion
    coefficient : callable
        ``coefficient(a0, i)`` returns the nodal values of
        ``f^(i)(a0) / i!`` for the nodal leading coefficient ``a0``.
    order : int, optional
        Highest power to include; defaults to the nilpotency bound
        ``ceil(W / e_min)``.
    """
    a0, rest = a._leading()
    if order is None:
        order = a._series_order(rest)
    power = AsympExpansion.constant(a.table, 1.0, a.weight, a.max_log)
    total = power.times_function(coefficient(a0, 0))
    for i in range(1, order + 1):
        power = rest * power
        if power.is_zero():
            break
        total = total + power.times_function(coefficient(a0, i))
    return total


def add(a: AsympExpansion, b: AsympExpansion) -> AsympExpansion:
    return a + b


def multiply(a: AsympExpansion, b: AsympExpansion) -> AsympExpansion:
    return a * b


def invert(a: AsympExpansion) -> AsympExpansion:
    return a.invert()


def real_power(a: AsympExpansion, theta: float) -> AsympExpansion:
    return a.real_power(theta)


def weight_classify(a: AsympExpansion, chart: IndicialChart, sigma: float) -> dict:
    """Partition the terms of ``a`` relative to the weight ``sigma``.

    Returns
    -------
    dict
        ``"constant"``: the ``x**0`` log-free term; ``"labels"``: mapping
        from root name ``q_j^-`` to terms with exponent ``-q_j^-``;
        ``"flat"``: terms lying in the weight-``sigma`` space; ``"other"``:
        everything else.
    """
    out = {"constant": [], "labels": {}, "flat": [], "other": []}
    for t in a.terms:
        if abs(t.exponent) <= KEY_TOL and t.log_power == 0:
            out["constant"].append(t)
            continue
        label = None
        for r in chart.roots[1:]:
            if abs(t.exponent + r.q_minus) <= KEY_TOL:
                label = f"q_{r.j}^-"
                break
        if label is not None:
            out["labels"].setdefault(label, []).append(t)
        elif membership_exponent_test(-t.exponent, sigma, chart.n):
            out["flat"].append(t)
        else:
            out["other"].append(t)
    return out
