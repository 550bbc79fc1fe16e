"""Eigenvalues and eigenspaces of the cross-section Laplacian.

Two backends produce a :class:`SpectrumTable`:

* :func:`spectrum_analytic` for circles and round spheres, with closed-form
  eigenvalues and (for circles and ``S^2``) a nodal eigenbasis on a
  quadrature grid;
* :func:`spectrum_numeric` for periodic curves described by sampled metric
  coefficients, using a finite-difference discretisation.

Every table carries a discrete Laplacian acting on nodal values that was
built independently of the eigenbasis, so the eigen-relation can be
checked rather than assumed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.special import sph_harm_y

from .errors import SpectrumError
from .geometry import CrossSection

__all__ = [
    "SpectrumEntry",
    "SpectrumTable",
    "spectrum_analytic",
    "spectrum_numeric",
    "sphere_multiplicity",
]


@dataclass(frozen=True)
class SpectrumEntry:
    """One distinct eigenvalue ``lambda_j`` with its multiplicity."""

    j: int
    eigenvalue: float
    multiplicity: int
    exact: Fraction | None = None


@dataclass(frozen=True, eq=False)
class SpectrumTable:
    """Distinct eigenvalues of the cross-section Laplacian and their bases.

    Columns of :attr:`basis` are grouped by entry: the first
    ``entries[0].multiplicity`` columns span the kernel, and so on. The
    basis is orthonormal for the quadrature ``weights``.

    Attributes
    ----------
    cross_section : CrossSection
    entries : tuple of SpectrumEntry
        Ordered with strictly decreasing eigenvalue, ``entries[0]`` is 0.
    nodes : ndarray or None
        Quadrature nodes: arc-length positions for curves, unit vectors of
        shape ``(M, 3)`` for ``S^2``. ``None`` when no nodal basis exists.
    weights : ndarray or None
        Quadrature weights, shape ``(M,)``.
    basis : ndarray or None
        Nodal values of the eigenbasis, shape ``(M, K)``.
    laplacian : callable or None
        Discrete Laplacian acting on nodal values along the last axis.
    derivatives : tuple of ndarray
        First-order derivative matrices ``(M, M)``; their count equals the
        number of derivative directions used by the Sobolev norms.
    """

    cross_section: CrossSection
    entries: tuple[SpectrumEntry, ...]
    nodes: np.ndarray | None = None
    weights: np.ndarray | None = None
    basis: np.ndarray | None = None
    laplacian: Callable[[np.ndarray], np.ndarray] | None = None
    derivatives: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        lam = self.eigenvalues
        if lam[0] != 0.0:
            raise SpectrumError("lambda_0 must be exactly 0")
        if np.any(np.diff(lam) >= 0):
            raise SpectrumError("eigenvalues must strictly decrease")
        if self.entries[0].multiplicity != self.cross_section.components:
            raise SpectrumError(
                "multiplicity of lambda_0 must equal the number of components")
        if self.basis is not None:
            if self.basis.shape[1] != self.size:
                raise SpectrumError("basis column count does not match entries")
            gram = self.basis.T @ (self.weights[:, None] * self.basis)
            dev = np.abs(gram - np.eye(self.size)).max()
            if dev >= 1e-10:
                raise SpectrumError(f"eigenbasis not orthonormal (deviation {dev:.2e})")
            for arr in (self.nodes, self.weights, self.basis):
                arr.setflags(write=False)

    # sizes and indexing
    @property
    def J_max(self) -> int:
        return len(self.entries) - 1

    @property
    def size(self) -> int:
        """Number of eigenbasis columns ``K``."""
        return int(sum(e.multiplicity for e in self.entries))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.eigenvalue for e in self.entries], dtype=float)

    @property
    def multiplicities(self) -> list[int]:
        return [e.multiplicity for e in self.entries]

    @property
    def column_entry(self) -> np.ndarray:
        """Entry index ``j`` of every basis column."""
        return np.repeat(np.arange(len(self.entries)), self.multiplicities)

    @property
    def column_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.column_entry]

    def columns_of(self, j: int) -> np.ndarray:
        """Column indices spanning the eigenspace of entry ``j``."""
        start = sum(self.multiplicities[:j])
        return np.arange(start, start + self.entries[j].multiplicity)

    def projector(self, j: int) -> np.ndarray:
        """Orthogonal projector onto eigenspace ``j`` in coefficient space."""
        p = np.zeros((self.size, self.size))
        cols = self.columns_of(j)
        p[cols, cols] = 1.0
        return p

    @property
    def has_nodes(self) -> bool:
        return self.basis is not None

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    def _need_nodes(self):
        if not self.has_nodes:
            raise SpectrumError(
                f"no nodal eigenbasis for {self.cross_section.kind} "
                f"of dimension {self.cross_section.dimension}")

    # transforms
    def to_coeffs(self, values) -> np.ndarray:
        """Project nodal values (last axis ``M``) onto the eigenbasis."""
        self._need_nodes()
        return (np.asarray(values) * self.weights) @ self.basis

    def to_nodal(self, coeffs) -> np.ndarray:
        """Evaluate eigenbasis coefficients (last axis ``K``) at the nodes."""
        self._need_nodes()
        return np.asarray(coeffs) @ self.basis.T

    def multiplication_matrix(self, coeffs) -> np.ndarray:
        """Matrix of multiplication by a function, in eigenbasis coordinates."""
        f = self.to_nodal(coeffs)
        return self.basis.T @ ((self.weights * f)[:, None] * self.basis)

    def apply_laplacian(self, values) -> np.ndarray:
        """Discrete cross-section Laplacian applied along the last axis."""
        self._need_nodes()
        if self.laplacian is None:
            raise SpectrumError("table has no discrete Laplacian")
        return self.laplacian(np.asarray(values, dtype=float))

    def to_dict(self) -> dict:
        return {
            "cross_section": self.cross_section.to_dict(),
            "entries": [
                {"j": e.j, "lambda": e.eigenvalue, "mult": e.multiplicity}
                for e in self.entries
            ],
        }


def sphere_multiplicity(j: int, n: int) -> int:
    """Dimension of degree-``j`` spherical harmonics on ``S^n``."""
    if j == 0:
        return 1
    return comb(j + n, n) - comb(j + n - 2, n)


def _block_diag_values(op, blocks, m):
    def apply(values):
        out = np.empty_like(values)
        for b in range(blocks):
            out[..., b * m:(b + 1) * m] = op(values[..., b * m:(b + 1) * m])
        return out
    return apply


def _replicate(nodes, weights, basis_blocks, components):
    """Disjoint union of identical components.

    ``basis_blocks`` is a list of per-entry nodal blocks ``(M, mult)``;
    every entry's multiplicity is multiplied by ``components``.
    """
    m = weights.size
    cols = []
    for block in basis_blocks:
        for b in range(components):
            col = np.zeros((m * components, block.shape[1]))
            col[b * m:(b + 1) * m] = block
            cols.append(col)
    basis = np.hstack(cols)
    return np.tile(nodes, (components,) + (1,) * (nodes.ndim - 1)), np.tile(weights, components), basis


def _circle_table(cs: CrossSection, J_max: int, n_nodes: int | None) -> SpectrumTable:
    rho = float(cs.rho)
    m = n_nodes or 4 * (2 * J_max + 1)
    if m < 2 * J_max + 2:
        raise SpectrumError("grid resolution too coarse for the requested modes")
    length = 2 * np.pi * rho
    y = np.arange(m) * (length / m)
    w = np.full(m, length / m)
    blocks = [np.full((m, 1), 1 / np.sqrt(length))]
    amp = np.sqrt(2 / length)
    for j in range(1, J_max + 1):
        blocks.append(amp * np.column_stack([np.cos(j * y / rho), np.sin(j * y / rho)]))

    wave = np.fft.rfftfreq(m, d=1.0 / m) / rho

    def lap1(values):
        return np.fft.irfft(-(wave**2) * np.fft.rfft(values, axis=-1), n=m, axis=-1)

    deriv_mult = 1j * wave
    if m % 2 == 0:
        deriv_mult[-1] = 0.0
    d1 = np.fft.irfft(deriv_mult * np.fft.rfft(np.eye(m), axis=-1), n=m, axis=-1).T

    c = cs.components
    nodes, weights, basis = _replicate(y, w, blocks, c)
    entries = []
    for j in range(J_max + 1):
        exact = None
        if cs.exact:
            exact = -Fraction(j) ** 2 / Fraction(cs.rho) ** 2
        lam = -(j / rho) ** 2 if exact is None else float(exact)
        lam = lam if j else 0.0
        entries.append(SpectrumEntry(j, lam, c * (1 if j == 0 else 2), exact))
    return SpectrumTable(cs, tuple(entries), nodes, weights, basis,
                         _block_diag_values(lap1, c, m), (sla.block_diag(*[d1] * c),))


def _real_harmonics(J_max, theta, phi):
    blocks = []
    for ell in range(J_max + 1):
        cols = []
        for mm in range(-ell, ell + 1):
            y = sph_harm_y(ell, abs(mm), theta, phi)
            if mm == 0:
                cols.append(y.real)
            elif mm > 0:
                cols.append(np.sqrt(2) * (-1) ** mm * y.real)
            else:
                cols.append(np.sqrt(2) * (-1) ** mm * y.imag)
        blocks.append(np.column_stack(cols))
    return blocks


def _monomial_exponents(degree):
    return [e for d in range(degree + 1)
            for e in itertools.product(range(d + 1), repeat=3) if sum(e) == d]


def _monomials(points, exps):
    return np.column_stack([np.prod(points ** np.array(e), axis=1) for e in exps])


def _sphere_polynomial_operators(points, degree):
    """Laplacian and tangential gradient on ``S^2`` via polynomial extension.

    Nodal data is fitted by a polynomial of the given degree in ambient
    coordinates. For a homogeneous polynomial ``p`` of degree ``d`` the
    sphere Laplacian of its restriction is ``(Delta p - d (d + 1) p)|_S``.
    """
    exps = _monomial_exponents(degree)
    vander = _monomials(points, exps)
    pinv = np.linalg.pinv(vander, rcond=1e-12)
    lap_cols = np.zeros_like(vander)
    grads = [np.zeros_like(vander) for _ in range(3)]
    for c, e in enumerate(exps):
        d = sum(e)
        lap_cols[:, c] -= d * (d + 1) * vander[:, c]
        for a in range(3):
            if e[a] >= 2:
                f = list(e)
                f[a] -= 2
                lap_cols[:, c] += e[a] * (e[a] - 1) * np.prod(points ** np.array(f), axis=1)
            if e[a] >= 1:
                f = list(e)
                f[a] -= 1
                grads[a][:, c] = e[a] * np.prod(points ** np.array(f), axis=1)
    lap = lap_cols @ pinv
    radial = sum(points[:, [a]] * grads[a] for a in range(3))
    tangential = tuple((grads[a] - points[:, [a]] * radial) @ pinv for a in range(3))
    return lap, tangential


def _sphere_table(cs: CrossSection, J_max: int) -> SpectrumTable:
    n = cs.dimension
    entries = tuple(
        SpectrumEntry(j, float(-j * (j + n - 1)) if j else 0.0, sphere_multiplicity(j, n),
                      Fraction(-j * (j + n - 1)))
        for j in range(J_max + 1))
    if n != 2:
        return SpectrumTable(cs, entries)
    n_theta = 2 * (J_max + 1)
    n_phi = 2 * n_theta
    mu, gw = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(mu)
    phi = np.arange(n_phi) * (2 * np.pi / n_phi)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    tt, pp = tt.ravel(), pp.ravel()
    weights = np.repeat(gw, n_phi) * (2 * np.pi / n_phi)
    points = np.column_stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)])
    basis = np.hstack(_real_harmonics(J_max, tt, pp))
    lap, tangential = _sphere_polynomial_operators(points, J_max)
    return SpectrumTable(cs, entries, points, weights, basis,
                         lambda v: v @ lap.T, tangential)


def spectrum_analytic(cs: CrossSection, J_max: int, *, n_nodes: int | None = None) -> SpectrumTable:
    """Closed-form spectrum of a circle or a unit round sphere.

    Parameters
    ----------
    cs : CrossSection
        A circle or a sphere.
    J_max : int
        Index of the last distinct eigenvalue to include.
    n_nodes : int, optional
        Circle quadrature nodes per component; defaults to four times the
        number of eigenbasis columns.

    Returns
    -------
    SpectrumTable
        Circles of radius ``rho`` have ``lambda_j = -(j/rho)^2`` with
        multiplicity 2 for ``j >= 1``; ``S^n`` has ``lambda_j = -j(j+n-1)``.
        A nodal basis is attached for circles and for ``S^2``.
    """
    if J_max < 0:
        raise SpectrumError("J_max must be non-negative")
    if cs.kind == "circle":
        return _circle_table(cs, J_max, n_nodes)
    if cs.kind == "sphere":
        if cs.components != 1:
            raise SpectrumError("analytic backend unavailable for multi-component spheres")
        return _sphere_table(cs, J_max)
    raise SpectrumError("analytic backend unavailable")


def _periodic_stiffness(a, h, order):
    """Stiffness and mass matrices of ``-d/ds d/ds`` for metric ``a dy^2``."""
    n = a.size
    s = np.sqrt(a)
    idx = np.arange(n)
    diff = np.zeros((n, n))
    if order == 2:
        diff[idx, idx] = -1.0
        diff[idx, (idx + 1) % n] = 1.0
        s_half = 0.5 * (s + np.roll(s, -1))
    elif order == 4:
        for off, c in ((-1, 1 / 24), (0, -9 / 8), (1, 9 / 8), (2, -1 / 24)):
            diff[idx, (idx + off) % n] += c
        s_half = (-np.roll(s, 1) + 9 * s + 9 * np.roll(s, -1) - np.roll(s, -2)) / 16
    else:
        raise SpectrumError("order must be 2 or 4")
    stiff = diff.T @ (diff / (h * s_half)[:, None])
    mass = h * s
    return stiff, mass, diff, s_half


def spectrum_numeric(cs: CrossSection, J_max: int, tol: float = 1e-8, *, order: int = 2) -> SpectrumTable:
    """Spectrum of a sampled periodic curve by finite differences.

    The quadratic form ``int |f'|^2 / s dy`` with ``s = sqrt(a)`` is
    discretised by staggered differences, the mass by the periodic
    trapezoid rule, and the generalized symmetric eigenproblem is solved
    densely.

    Parameters
    ----------
    cs : CrossSection
        A ``sampled1d`` cross-section.
    J_max : int
        Number of distinct nonzero eigenvalues to return.
    tol : float
        Relative grouping tolerance: eigenvalues closer than
        ``tol * (1 + |lambda|)`` form one entry. Gaps that fall within
        ``[tol, 2 tol]`` are ambiguous and raise.
    order : {2, 4}
        Order of the difference stencil.
    """
    if cs.kind != "sampled1d":
        raise SpectrumError("numeric backend handles sampled1d cross-sections only")
    a = cs.metric
    n_nodes = a.size
    if J_max < 0 or n_nodes < 4 * J_max:
        raise SpectrumError(
            f"grid resolution violated: {n_nodes} nodes for J_max={J_max} "
            "(need at least 4*J_max)")
    h = cs.period / n_nodes
    stiff, mass, diff, s_half = _periodic_stiffness(a, h, order)
    try:
        mu, vecs = sla.eigh(stiff, np.diag(mass))
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(f"eigensolve did not converge: {exc}") from exc
    lam = -mu
    groups = [[0]]
    for i in range(1, lam.size):
        gap = abs(lam[i] - lam[groups[-1][-1]])
        scale = tol * (1 + abs(lam[i]))
        if gap < scale:
            groups[-1].append(i)
        elif gap <= 2 * scale:
            raise SpectrumError(f"unresolved multiplicity near lambda={lam[i]:.12g}")
        else:
            if len(groups) == J_max + 1:
                break
            groups.append([i])
    if len(groups) < J_max + 1:
        raise SpectrumError("not enough distinct eigenvalues on this grid")
    if abs(lam[groups[0]]).max() >= tol:
        raise SpectrumError("lowest eigenvalue is not numerically zero")

    entries, blocks = [], []
    for j, g in enumerate(groups):
        value = 0.0 if j == 0 else float(np.mean(lam[g]))
        entries.append(SpectrumEntry(j, value, len(g)))
        blocks.append(vecs[:, g])
    basis = np.hstack(blocks)
    if cs.components > 1:
        raise SpectrumError("numeric backend supports single-component curves")
    y = np.arange(n_nodes) * h
    op = -(stiff / mass[:, None])
    deriv = (diff / h)
    # centred derivative at the nodes from the staggered one
    centred = 0.5 * (deriv + np.roll(deriv, 1, axis=0)) / np.sqrt(a)[:, None]
    return SpectrumTable(cs, tuple(entries), y, mass.copy(), basis,
                         lambda v: v @ op.T, (centred,))
