"""Asymptotic spaces at the tip from residues of the inverted conormal symbol.

Near a pole ``sigma`` of ``f0(z)^-1 = (z**2 - (n-1) z + Delta)^-1`` the
singular part of a Mellin transform produces the tip profile

    G0 u(x) = Res_{z=sigma} x**-z f0(z)^-1 Mu(z),

and on a warped cone the first Taylor coefficient
``f1(z) = -H' z + Delta'`` of the conormal symbol adds the correction

    G1 u(x) = x * Res_{z=sigma} x**-z g1(z) Pi(z),
    g1(z) = -f0(z - 1)^-1 f1(z),

where ``Pi`` is the principal part of ``f0^-1 Mu`` at ``sigma``. All
operators are diagonal or dense matrices in the eigenbasis of a
:class:`~conepme.spectrum.SpectrumTable`.

Two independent routes are provided. :func:`residue_closed_form` expands
every factor in Laurent series around ``sigma`` using the indicial roots.
:func:`contour_quadrature_oracle` evaluates the symbol directly from the
eigenvalues on a circle around ``sigma`` and integrates with the
trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .asymp import AsympExpansion
from .errors import GreenError
from .geometry import WarpData
from .indicial import IndicialChart, Pole, compare

__all__ = [
    "AsympSpaceBasis",
    "hat_space",
    "full_space",
    "residue_closed_form",
    "contour_quadrature_oracle",
    "principal_part",
    "shifted_inverse_laurent",
    "default_radius",
    "warp_matrices",
]

ZERO_TOL = 1e-9
SERIES_DEPTH = 4


def _resolve_label(chart: IndicialChart, label) -> Pole:
    if isinstance(label, Pole):
        return label
    pole = chart.pole_at(float(label))
    if pole is None:
        raise GreenError(f"label {float(label):.12g} is not a pole")
    return pole


def _inverse_quadratic_laurent(a: np.ndarray, b: np.ndarray, depth: int) -> dict[int, np.ndarray]:
    """Laurent coefficients of ``1/((w - a)(w - b))`` at ``w = 0``, per entry.

    Powers from ``-2`` up to ``depth`` are returned; entries where ``a`` or
    ``b`` vanishes carry the corresponding pole.
    """
    out = {p: np.zeros(a.size) for p in range(-2, depth + 1)}
    for i, (ai, bi) in enumerate(zip(a, b)):
        za, zb = abs(ai) < ZERO_TOL, abs(bi) < ZERO_TOL
        if za and zb:
            out[-2][i] = 1.0
        elif za or zb:
            c = bi if za else ai
            # (1/w) * (-sum_k w^k / c^(k+1))
            for k in range(depth + 2):
                out[k - 1][i] = -1.0 / c ** (k + 1)
        else:
            for k in range(depth + 1):
                out[k][i] = sum(ai ** -(m + 1) * bi ** -(k - m + 1) for m in range(k + 1))
    return out


def shifted_inverse_laurent(chart: IndicialChart, sigma: float, shift: float = 0.0,
                            depth: int = SERIES_DEPTH) -> dict[int, np.ndarray]:
    """Laurent coefficients of ``f0(z - shift)^-1`` at ``z = sigma``.

    Returns a mapping from power to the eigenbasis diagonal. With
    ``shift = 1`` and ``sigma = 0`` the zeroth coefficient is the operator
    used for the log-free warped correction at the origin.
    """
    qp, qm = chart.column_q_plus, chart.column_q_minus
    return _inverse_quadratic_laurent(qp + shift - sigma, qm + shift - sigma, depth)


def _taylor_at(coeffs: np.ndarray, sigma: float) -> np.ndarray:
    """Taylor coefficients at ``sigma`` of ``sum_k coeffs[k] z**k``."""
    deg = coeffs.shape[0] - 1
    out = np.zeros_like(coeffs, dtype=float)
    for m in range(deg + 1):
        for k in range(m, deg + 1):
            out[m] += comb(k, m) * sigma ** (k - m) * coeffs[k]
    return out


def _as_poly(chart, u_mellin) -> np.ndarray:
    coeffs = np.atleast_2d(np.asarray(u_mellin, dtype=float))
    if coeffs.shape[1] != chart.spectrum.size:
        raise GreenError("Mellin data must have one coefficient vector per power, "
                         f"each of length {chart.spectrum.size}")
    return coeffs


def principal_part(chart: IndicialChart, sigma, u_mellin) -> dict[int, np.ndarray]:
    """Coefficients ``A_k`` of ``w**-k`` in ``f0(sigma + w)^-1 Mu(sigma + w)``.

    Parameters
    ----------
    u_mellin : array_like, shape (d + 1, K)
        ``Mu(z) = sum_k u_mellin[k] z**k`` in eigenbasis coordinates.
    """
    sigma = float(sigma)
    taylor = _taylor_at(_as_poly(chart, u_mellin), sigma)
    inv = shifted_inverse_laurent(chart, sigma)
    out = {}
    for k in (1, 2):
        acc = np.zeros(chart.spectrum.size)
        for m in range(taylor.shape[0]):
            p = -k - m
            if p in inv:
                acc += inv[p] * taylor[m]
        out[k] = acc
    return out


def warp_matrices(chart: IndicialChart, warp: WarpData) -> tuple[np.ndarray, np.ndarray]:
    """Multiplication-by-``H'`` matrix and ``Delta'`` in the eigenbasis."""
    warp.check(chart.spectrum)
    return chart.spectrum.multiplication_matrix(warp.hprime), np.array(warp.delta_prime)


def _residue_terms(sigma, laurent: dict[int, np.ndarray], shift=0.0):
    """Terms of ``Res_{w=0} x**-(sigma + w) Q(w)`` for a Laurent series ``Q``."""
    items = []
    for p, coeff in laurent.items():
        if p >= 0 or not np.any(coeff):
            continue
        k = -p
        items.append((shift - sigma, k - 1, coeff * (-1.0) ** (k - 1) / factorial(k - 1)))
    return items


def _correction_terms(chart, warp, sigma, prin):
    """Terms of ``G1`` generated by a principal part ``prin``."""
    hmat, dmat = warp_matrices(chart, warp)
    f1_0 = dmat - sigma * hmat
    f1_1 = -hmat
    inv = shifted_inverse_laurent(chart, sigma, shift=1.0)
    # B(w) = -F1(w) (f1_0 + f1_1 w)
    bser = {}
    for p, d in inv.items():
        bser[p] = bser.get(p, 0) - d[:, None] * f1_0
        bser[p + 1] = bser.get(p + 1, 0) - d[:, None] * f1_1
    q = {}
    for pb, bmat in bser.items():
        for k, a in prin.items():
            p = pb - k
            if p < 0:
                q[p] = q.get(p, 0) + bmat @ a
    return _residue_terms(sigma, q, shift=1.0)


def residue_closed_form(chart: IndicialChart, sigma, u_mellin, warp: WarpData | None = None,
                        *, weight: float = np.inf) -> AsympExpansion:
    """``G0 u + G1 u`` by symbolic Laurent expansion in the eigenbasis."""
    pole = _resolve_label(chart, sigma)
    s = float(pole.value)
    prin = principal_part(chart, s, u_mellin)
    items = _residue_terms(s, {-k: a for k, a in prin.items()})
    if warp is not None and not warp.straight:
        items += _correction_terms(chart, warp, s, prin)
    return AsympExpansion(chart.spectrum, items, weight)


def default_radius(chart: IndicialChart, sigma: float) -> float:
    """Half the distance from ``sigma`` to the nearest other singularity of
    ``f0(z)^-1`` or ``f0(z - 1)^-1``."""
    pts = [float(p) for p in chart.poles()]
    pts += [v + 1 for v in pts]
    dist = [abs(v - sigma) for v in pts if abs(v - sigma) > ZERO_TOL]
    return 0.5 * min(dist)


def contour_quadrature_oracle(chart: IndicialChart, sigma, u_mellin, radius: float | None = None,
                              nodes: int = 128, warp: WarpData | None = None,
                              x_samples=None, max_log: int = 3) -> AsympExpansion:
    """Residues by the trapezoid rule on ``|z - sigma| = radius``.

    The symbol is evaluated directly from the eigenvalues, the principal
    part needed by the warped correction is itself obtained by quadrature,
    and the sampled profiles on an ``x`` ladder are fitted to the term basis
    ``x**e (ln x)**l`` at ``e = -sigma`` and ``e = 1 - sigma``.

    Raises
    ------
    GreenError
        "contour encloses multiple poles" when ``radius`` reaches another
        singularity; also when ``nodes < 64``.
    """
    if nodes < 64:
        raise GreenError("at least 64 quadrature nodes are required")
    s = float(sigma)
    limit = 2 * default_radius(chart, s)
    if radius is None:
        radius = 0.5 * limit
    if radius >= limit:
        raise GreenError("contour encloses multiple poles")
    lam = chart.spectrum.column_eigenvalues
    n = chart.n
    coeffs = _as_poly(chart, u_mellin)

    theta = 2 * np.pi * np.arange(nodes) / nodes
    w = radius * np.exp(1j * theta)
    z = s + w

    def f0inv(zz):
        return 1.0 / (zz[:, None] ** 2 - (n - 1) * zz[:, None] + lam[None, :])

    mu = sum(coeffs[k][None, :] * z[:, None] ** k for k in range(coeffs.shape[0]))
    vals = f0inv(z) * mu                                    # (N, K)

    if x_samples is None:
        x_samples = np.geomspace(1e-2, 1.0, 17)
    x = np.asarray(x_samples, dtype=float)
    lx = np.log(x)
    kernel = np.exp(-np.outer(lx, z)) * (w / nodes)[None, :]  # (X, N)
    g0 = (kernel @ vals).real                               # (X, K)
    profiles = [(-s, g0 * x[:, None] ** s)]

    if warp is not None and not warp.straight:
        hmat, dmat = warp_matrices(chart, warp)
        amps = {m: (vals * (w ** m)[:, None]).mean(axis=0) for m in (1, 2, 3)}
        pi = sum(amps[m][None, :] * w[:, None] ** -m for m in amps)
        f1 = -z[:, None, None] * hmat[None] + dmat[None]
        g1 = -f0inv(z - 1)[:, :, None] * f1
        corr = np.einsum("nij,nj->ni", g1, pi)
        g1x = x[:, None] * (kernel @ corr).real
        profiles.append((1 - s, g1x * x[:, None] ** (s - 1)))

    items = []
    vander = np.column_stack([lx**l for l in range(max_log + 1)])
    for e, prof in profiles:
        sol, *_ = np.linalg.lstsq(vander, prof, rcond=None)
        for l in range(max_log + 1):
            items.append((e, l, sol[l]))
    return AsympExpansion(chart.spectrum, items, np.inf, max_log)


@dataclass(frozen=True, eq=False)
class AsympSpaceBasis:
    """Model-cone and corrected bases of the asymptotic space at ``label``.

    Attributes
    ----------
    label : Pole
    hat_basis : list of AsympExpansion
        Model-cone profiles.
    full_basis : list of AsympExpansion
        Profiles including warped corrections; ``full_basis[i]`` is the
        image of ``hat_basis[i]``.
    corrections : list of AsympExpansion
        ``full_basis[i] - hat_basis[i]``.
    removable : list of AsympExpansion
        Parts of the corrections lying in an included tip space
        ``x**(-q_l^-) E_l``; they may be dropped when composing a domain.
    tags : list of str
        ``"straight"``, ``"corrected"`` or ``"already-minimal"``.
    theta_map : list of (int, int)
    """

    label: Pole
    hat_basis: list
    full_basis: list
    corrections: list
    removable: list
    tags: list = field(default_factory=list)

    @property
    def theta_map(self) -> list[tuple[int, int]]:
        return [(i, i) for i in range(len(self.hat_basis))]

    @property
    def reduced_basis(self) -> list:
        """Full basis with removable pieces dropped."""
        return [f - r for f, r in zip(self.full_basis, self.removable)]

    def to_dict(self) -> dict:
        return {
            "label": self.label.name,
            "value": float(self.label.value),
            "dimension": len(self.hat_basis),
            "elements": [
                {"hat": h.render(), "full": f.render(), "removable": r.render(),
                 "tag": t, "hat_data": h.to_dict(), "full_data": f.to_dict()}
                for h, f, r, t in zip(self.hat_basis, self.full_basis, self.removable, self.tags)
            ],
        }


def _generators(chart, pole):
    """Hat generators with their principal parts ``{1: A_1, 2: A_2}``."""
    tab = chart.spectrum
    size = tab.size
    out = []
    for col in tab.columns_of(pole.j):
        e = np.zeros(size)
        e[col] = 1.0
        if pole.order == 2:
            zero = np.zeros(size)
            # e0 + e1 ln x has A_1 = e0 and A_2 = -e1
            out.append(([(0.0, 0, e)], {1: e, 2: zero}))
            out.append(([(0.0, 1, e)], {1: zero, 2: -e}))
        else:
            out.append(([(-float(pole.value), 0, e)], {1: e, 2: np.zeros(size)}))
    return out


def hat_space(chart: IndicialChart, label) -> list[AsympExpansion]:
    """Model-cone asymptotic profiles at a pole.

    A simple pole ``q`` with eigenspace ``E_j`` gives ``{x**-q e : e in E_j}``;
    the double pole at the origin (``n = 1``) gives ``{e, e ln x}`` for every
    constant direction ``e``.
    """
    pole = _resolve_label(chart, label)
    return [AsympExpansion(chart.spectrum, items, np.inf) for items, _ in _generators(chart, pole)]


def full_space(chart: IndicialChart, warp: WarpData | None, label, gamma) -> AsympSpaceBasis:
    """Asymptotic space at ``label`` including first-order warped corrections.

    Parameters
    ----------
    gamma : real
        Weight; decides whether the corrections are needed or already lie
        in the minimal domain (tag ``"already-minimal"``).

    Raises
    ------
    GreenError
        "adjust gamma" when ``label - 1`` coincides with the lower end of
        the weight window.
    """
    pole = _resolve_label(chart, label)
    tab = chart.spectrum
    s = float(pole.value)
    lo = (chart.n + 1) / 2 - float(gamma) - 2
    side = compare(s - 1, lo)
    if side == 0:
        raise GreenError("adjust gamma: label - 1 sits on the weight window boundary")
    straight = warp is None or warp.straight
    tag = "straight" if straight else ("corrected" if side > 0 else "already-minimal")

    # included tip spaces that corrections may fall into
    targets = [r.j for r in chart.roots[1:chart.k + 1]]
    hats, fulls, corrs, rems = [], [], [], []
    for items, prin in _generators(chart, pole):
        hat = AsympExpansion(tab, items, np.inf)
        corr = AsympExpansion(tab, [] if straight else _correction_terms(chart, warp, s, prin), np.inf)
        rem_items = []
        for t in corr.terms:
            if t.log_power:
                continue
            for j in targets:
                if abs(t.exponent + chart.q_minus(j)) <= 1e-10:
                    part = np.zeros(tab.size)
                    cols = tab.columns_of(j)
                    part[cols] = t.coeff[cols]
                    rem_items.append((t.exponent, 0, part))
        hats.append(hat)
        corrs.append(corr)
        fulls.append(hat + corr)
        rems.append(AsympExpansion(tab, rem_items, np.inf))
    return AsympSpaceBasis(pole, hats, fulls, corrs, rems, [tag] * len(hats))
