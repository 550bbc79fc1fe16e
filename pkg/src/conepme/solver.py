"""Semi-implicit solver for the v-form porous medium equation on a model cone.

With ``v = u**m`` the equation reads ``dv/dt = m v**((m-1)/m) Lap v + G``.
The tip collar ``(0, 1] x Y`` is resolved in ``r = ln x`` on a uniform grid,
where the straight-cone Laplacian acting on an eigenmode with eigenvalue
``lambda`` becomes

    Lap v = exp(-2 r) (v_rr + (n - 1) v_r + lambda v).

Each time step freezes ``a = m v**((m-1)/m)``, splits it into its
cross-section mean ``abar(r)`` and the fluctuation ``a - abar``, treats the
mean implicitly mode by mode (tridiagonal) and the fluctuation by a fixed
number of Picard sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_banded

from .errors import QuenchError, SolverError
from .geometry import ConeGeometry, cutoff
from .indicial import IndicialChart, indicial_roots
from .spectrum import SpectrumTable, spectrum_analytic

__all__ = [
    "RadialGrid",
    "SolverConfig",
    "SolverState",
    "Trajectory",
    "ModeLaplacian",
    "ConeSolver",
    "assemble_laplacian",
    "step",
    "evolve",
    "discrete_steady_state",
    "linear_reference",
    "flat_bump",
    "harmonic_seed",
]

OUTER_BCS = ("dirichlet-hold", "neumann-zero")
TIP_CLOSURES = ("regularity", "truncation-dirichlet")


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid in ``r = ln x`` on ``[ln x_min, 0]`` with ``n_r`` nodes."""

    x_min: float
    n_r: int

    def __post_init__(self):
        if not 1e-6 <= self.x_min <= 1e-2:
            raise SolverError("x_min must lie in [1e-6, 1e-2]")
        if self.n_r < 8:
            raise SolverError("need at least 8 radial nodes")

    @property
    def r(self) -> np.ndarray:
        return np.linspace(np.log(self.x_min), 0.0, self.n_r)

    @property
    def x(self) -> np.ndarray:
        return np.exp(self.r)

    @property
    def dr(self) -> float:
        return -np.log(self.x_min) / (self.n_r - 1)

    def refined(self) -> "RadialGrid":
        """Grid with ``dr`` halved and the same end points."""
        return RadialGrid(self.x_min, 2 * self.n_r - 1)


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Run parameters for :class:`ConeSolver`.

    Attributes
    ----------
    m : float
        Porous-medium exponent.
    cone : ConeGeometry
        Must be straight.
    x_min, n_r : float, int
        Radial grid.
    n_modes : int
        Number of nonzero cross-section eigenvalues kept.
    t_end : float
    dt : float or None
        Base step; ``None`` uses half the diffusive scale at ``x = 1``.
    outer_bc : {"dirichlet-hold", "neumann-zero"}
    tip_closure : {"regularity", "truncation-dirichlet"}
    forcing : callable or None
        ``forcing(t, x, nodes, V)`` returning nodal values of ``G``.
    picard_sweeps : int
    max_halvings : int
    snapshot_times : tuple of float
    table : SpectrumTable or None
        Precomputed cross-section spectrum; built from ``cone`` otherwise.
    """

    m: float
    cone: ConeGeometry
    x_min: float = 1e-4
    n_r: int = 400
    n_modes: int = 6
    t_end: float = 0.05
    dt: float | None = None
    outer_bc: str = "dirichlet-hold"
    tip_closure: str = "regularity"
    forcing: Callable | None = None
    picard_sweeps: int = 2
    max_halvings: int = 10
    snapshot_times: tuple = ()
    table: SpectrumTable | None = None

    def __post_init__(self):
        if not self.m > 0:
            raise SolverError("m must be positive")
        if self.dt is not None and not self.dt > 0:
            raise SolverError("dt must be positive")
        if self.t_end < 0:
            raise SolverError("t_end must be non-negative")
        if self.outer_bc not in OUTER_BCS:
            raise SolverError(f"outer_bc must be one of {OUTER_BCS}")
        if self.tip_closure not in TIP_CLOSURES:
            raise SolverError(f"tip_closure must be one of {TIP_CLOSURES}")
        if self.picard_sweeps < 1:
            raise SolverError("need at least one Picard sweep")
        RadialGrid(self.x_min, self.n_r)

    @property
    def grid(self) -> RadialGrid:
        return RadialGrid(self.x_min, self.n_r)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SolverState:
    """Nodal values ``V`` (``n_r x M``) at time ``t`` plus held boundary data."""

    t: float
    V: np.ndarray
    tip_values: np.ndarray
    outer_values: np.ndarray

    def __post_init__(self):
        self.V.setflags(write=False)


@dataclass(eq=False)
class Trajectory:
    """Snapshots and per-step diagnostics of a run."""

    config: SolverConfig
    grid: RadialGrid
    table: SpectrumTable
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)

    def snapshot_at(self, t: float, tol: float = 1e-12) -> SolverState:
        for s in self.snapshots:
            if abs(s.t - t) <= tol * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}")

    @property
    def initial(self) -> SolverState:
        return self.snapshots[0]

    @property
    def final(self) -> SolverState:
        return self.snapshots[-1]


class ModeLaplacian:
    """The straight-cone Laplacian in ``(r, eigenmode)`` coordinates.

    Parameters
    ----------
    grid : RadialGrid
    table : SpectrumTable
    chart : IndicialChart
    outer_bc, tip_closure : str

    Notes
    -----
    Per eigenmode the operator is tridiagonal. With the regularity closure
    the tip row uses the ghost value implied by ``v_r = -q^- v``, which is
    exact for the bounded profile ``x**(-q^-)`` and suppresses the
    ``x**(-q^+)`` branch. Held rows (Dirichlet data) have zero operator rows.
    """

    def __init__(self, grid: RadialGrid, table: SpectrumTable, chart: IndicialChart,
                 outer_bc: str = "dirichlet-hold", tip_closure: str = "regularity"):
        self.grid = grid
        self.table = table
        self.n = chart.n
        self.outer_bc = outer_bc
        self.tip_closure = tip_closure
        self.lam = table.eigenvalues
        self.q_minus = np.array([r.q_minus for r in chart.roots])
        self._bands = [self._mode_bands(j) for j in range(len(self.lam))]

    @property
    def tip_held(self) -> bool:
        return self.tip_closure == "truncation-dirichlet"

    @property
    def outer_held(self) -> bool:
        return self.outer_bc == "dirichlet-hold"

    def _mode_bands(self, j):
        """Sub, main and super diagonals of the mode-``j`` operator."""
        n_r, dr = self.grid.n_r, self.grid.dr
        scale = np.exp(-2 * self.grid.r)
        lam = self.lam[j]
        c2 = 1.0 / dr**2
        c1 = (self.n - 1) / (2 * dr)
        lower = np.full(n_r, c2 - c1)
        main = np.full(n_r, -2 * c2 + lam)
        upper = np.full(n_r, c2 + c1)
        if self.tip_held:
            lower[0] = main[0] = upper[0] = 0.0
        else:
            q = self.q_minus[j]
            main[0] = -2 * c2 + 2 * q / dr - (self.n - 1) * q + lam
            upper[0] = 2 * c2
            lower[0] = 0.0
        if self.outer_held:
            lower[-1] = main[-1] = upper[-1] = 0.0
        else:
            lower[-1] = 2 * c2
            main[-1] = -2 * c2 + lam
            upper[-1] = 0.0
        return lower * scale, main * scale, upper * scale

    def apply_mode(self, j: int, c: np.ndarray) -> np.ndarray:
        """Apply the mode-``j`` operator to radial profiles ``c`` (``n_r x ...``)."""
        lower, main, upper = self._bands[j]
        c = np.asarray(c, dtype=float)
        shape = (-1,) + (1,) * (c.ndim - 1)
        out = main.reshape(shape) * c
        out[1:] += lower[1:].reshape(shape) * c[:-1]
        out[:-1] += upper[:-1].reshape(shape) * c[1:]
        return out

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        """Apply to modal coefficients ``(n_r, K)``."""
        out = np.empty_like(coeffs, dtype=float)
        for j in range(len(self.lam)):
            cols = self.table.columns_of(j)
            out[:, cols] = self.apply_mode(j, coeffs[:, cols])
        return out

    def apply_nodal(self, values: np.ndarray) -> np.ndarray:
        return self.table.to_nodal(self.apply(self.table.to_coeffs(values)))

    def dense_mode(self, j: int) -> np.ndarray:
        """Dense matrix of the mode-``j`` operator."""
        lower, main, upper = self._bands[j]
        return np.diag(main) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)

    def implicit_solve(self, j: int, weight: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(I - diag(weight) L_j) c = rhs`` for one or more columns."""
        lower, main, upper = self._bands[j]
        ab = np.zeros((3, self.grid.n_r))
        ab[0, 1:] = -weight[:-1] * upper[:-1]
        ab[1] = 1.0 - weight * main
        ab[2, :-1] = -weight[1:] * lower[1:]
        return solve_banded((1, 1), ab, rhs, check_finite=False)


def _build_table(cfg: SolverConfig) -> SpectrumTable:
    if cfg.table is not None:
        return cfg.table
    return spectrum_analytic(cfg.cone.cross_section, cfg.n_modes)


def assemble_laplacian(cone: ConeGeometry, grid: RadialGrid, table: SpectrumTable | None = None,
                       *, n_modes: int = 6, outer_bc: str = "dirichlet-hold",
                       tip_closure: str = "regularity") -> ModeLaplacian:
    """Build the straight-cone operator on ``grid``.

    Raises
    ------
    SolverError
        "warped evolution unsupported" for non-straight cones.
    """
    if not cone.straight:
        raise SolverError("warped evolution unsupported")
    if table is None:
        table = spectrum_analytic(cone.cross_section, n_modes)
    return ModeLaplacian(grid, table, indicial_roots(table, cone.n), outer_bc, tip_closure)


class ConeSolver:
    """Time stepper bound to one configuration.

    Examples
    --------
    >>> from conepme.geometry import ConeGeometry, CrossSection
    >>> cfg = SolverConfig(m=2, cone=ConeGeometry(CrossSection.circle(1.3)),
    ...                    n_r=64, n_modes=3, t_end=0.01)
    >>> solver = ConeSolver(cfg)
    >>> state = solver.initial_state(lambda x, y: 1.0 + 0 * x * y)
    >>> float(abs(solver.step(state).V - 1.0).max()) < 1e-12
    True
    """

    def __init__(self, cfg: SolverConfig):
        if not cfg.cone.straight:
            raise SolverError("warped evolution unsupported")
        self.cfg = cfg
        self.grid = cfg.grid
        self.table = _build_table(cfg)
        if not self.table.has_nodes:
            raise SolverError("the cross-section table needs a nodal basis")
        self.chart = indicial_roots(self.table, cfg.cone.n)
        self.op = ModeLaplacian(self.grid, self.table, self.chart, cfg.outer_bc, cfg.tip_closure)
        self.mean_weights = self.table.weights / self.table.volume
        self._x = self.grid.x

    # setup
    def initial_state(self, v0) -> SolverState:
        """State at ``t = 0`` from a sampler ``v0(x, nodes)`` or a nodal array."""
        if callable(v0):
            V = np.asarray(v0(self._x[:, None], self.table.nodes), float)
            V = np.broadcast_to(V, (self.grid.n_r, self.table.weights.size)).copy()
        else:
            V = np.array(v0, dtype=float)
        if V.shape != (self.grid.n_r, self.table.weights.size):
            raise SolverError(f"initial data has shape {V.shape}")
        if not np.all(V > 0):
            raise SolverError("initial data must be strictly positive")
        return SolverState(0.0, V, V[0].copy(), V[-1].copy())

    def coefficient(self, V: np.ndarray) -> np.ndarray:
        m = self.cfg.m
        return m * V ** ((m - 1) / m)

    def base_dt(self, state: SolverState) -> float:
        if self.cfg.dt is not None:
            return self.cfg.dt
        return 0.5 * self.grid.dr**2 / float(self.coefficient(state.V).max())

    def picard_contraction(self, state: SolverState) -> float:
        """``max |a - abar| / abar``: below 1 the Picard sweeps contract."""
        a = self.coefficient(state.V)
        abar = a @ self.mean_weights
        return float((np.abs(a - abar[:, None]).max(axis=1) / abar).max())

    # one step
    def _held_rows(self, coeffs, state):
        tab = self.table
        if self.op.tip_held:
            coeffs[0] = tab.to_coeffs(state.tip_values)
        if self.op.outer_held:
            coeffs[-1] = tab.to_coeffs(state.outer_values)
        return coeffs

    def _attempt(self, state: SolverState, dt: float) -> np.ndarray:
        tab, op = self.table, self.op
        a = self.coefficient(state.V)
        abar = a @ self.mean_weights
        atil = a - abar[:, None]
        base = state.V
        if self.cfg.forcing is not None:
            base = base + dt * np.asarray(self.cfg.forcing(state.t, self._x, tab.nodes, state.V))
        weight = dt * abar
        V = state.V
        for _ in range(self.cfg.picard_sweeps):
            rhs = base + dt * atil * op.apply_nodal(V) if np.any(atil) else base
            coeffs = self._held_rows(tab.to_coeffs(rhs), state)
            new = np.empty_like(coeffs)
            for j in range(len(op.lam)):
                cols = tab.columns_of(j)
                new[:, cols] = op.implicit_solve(j, weight, coeffs[:, cols])
            V = tab.to_nodal(new)
        return V

    def step(self, state: SolverState, dt: float | None = None) -> tuple[SolverState, float]:
        """Advance one step, halving ``dt`` until the result is positive.

        Returns
        -------
        (SolverState, float)
            The new state and the step actually taken.

        Raises
        ------
        QuenchError
            "quenching detected" when ``max_halvings`` halvings do not
            restore positivity; ``state`` is left untouched.
        """
        if dt is None:
            dt = self.base_dt(state)
        if self.picard_contraction(state) >= 1.0:
            raise SolverError("Picard sweeps do not contract: coefficient fluctuation too large")
        for _ in range(self.cfg.max_halvings + 1):
            V = self._attempt(state, dt)
            if np.all(np.isfinite(V)) and V.min() > 0:
                return SolverState(state.t + dt, V, state.tip_values, state.outer_values), dt
            dt *= 0.5
        raise QuenchError(f"quenching detected at t={state.t:.6g}")

    def diagnostics(self, state: SolverState, dt: float) -> dict:
        V = state.V
        dr = self.grid.dr
        dv = (3 * V[-1] - 4 * V[-2] + V[-3]) / (2 * dr)
        return {"t": state.t, "dt": dt, "min": float(V.min()), "max": float(V.max()),
                "outer_flux": float(dv @ self.table.weights)}

    def evolve(self, v0, snapshot_times=None) -> Trajectory:
        """Run to ``t_end`` storing snapshots at the requested times."""
        cfg = self.cfg
        state = self.initial_state(v0)
        traj = Trajectory(cfg, self.grid, self.table)
        traj.times.append(0.0)
        traj.snapshots.append(state)
        times = cfg.snapshot_times if snapshot_times is None else snapshot_times
        marks = sorted({float(t) for t in times if 0 < t < cfg.t_end} | {cfg.t_end})
        if cfg.t_end == 0:
            return traj
        base = self.base_dt(state)
        for mark in marks:
            while state.t < mark - 1e-14 * max(1.0, mark):
                dt = min(base, mark - state.t)
                state, used = self.step(state, dt)
                traj.dt_history.append(used)
                traj.diagnostics.append(self.diagnostics(state, used))
            state = SolverState(mark, state.V, state.tip_values, state.outer_values)
            traj.times.append(mark)
            traj.snapshots.append(state)
        return traj


def step(state: SolverState, cfg: SolverConfig) -> SolverState:
    """One semi-implicit step of the configuration's solver."""
    return ConeSolver(cfg).step(state)[0]


def evolve(cfg: SolverConfig, v0) -> Trajectory:
    """Evolve initial data ``v0`` (sampler or nodal array) to ``cfg.t_end``."""
    return ConeSolver(cfg).evolve(v0)


def discrete_steady_state(solver: ConeSolver, state: SolverState) -> np.ndarray:
    """Discrete harmonic function with the boundary data of ``state``.

    Raises
    ------
    SolverError
        When no boundary row is held (the constant mode is then singular).
    """
    op, tab = solver.op, solver.table
    if not (op.tip_held or op.outer_held):
        raise SolverError("steady state undefined without a held boundary")
    coeffs = tab.to_coeffs(state.V)
    rhs = np.zeros_like(coeffs)
    rhs = solver._held_rows(rhs, state)
    out = np.empty_like(coeffs)
    for j in range(len(op.lam)):
        cols = tab.columns_of(j)
        mat = op.dense_mode(j)
        if op.tip_held:
            mat[0, 0] = 1.0
        if op.outer_held:
            mat[-1, -1] = 1.0
        out[:, cols] = np.linalg.solve(mat, rhs[:, cols])
    return tab.to_nodal(out)


def linear_reference(solver: ConeSolver, state: SolverState, dt_sequence, marks=()) -> list:
    """Dense modal backward-Euler reference for the heat flow (``m = 1``).

    Replays ``dt_sequence`` with dense LU solves per eigenmode (factors are
    reused across repeated step sizes), independent
    of the banded and Picard machinery. Returns the nodal profiles after the
    step counts listed in ``marks`` (all steps when empty).
    """
    if solver.cfg.m != 1 or solver.cfg.forcing is not None:
        raise SolverError("the linear reference covers m = 1 without forcing")
    op, tab = solver.op, solver.table
    n_r = solver.grid.n_r
    coeffs = tab.to_coeffs(state.V)
    tip = tab.to_coeffs(state.tip_values)
    outer = tab.to_coeffs(state.outer_values)
    ops = [op.dense_mode(j) for j in range(len(op.lam))]
    eye = np.eye(n_r)
    marks = set(marks) if marks else {len(dt_sequence)}
    factors = {}
    out = []
    for count, dt in enumerate(dt_sequence, start=1):
        new = np.empty_like(coeffs)
        for j, L in enumerate(ops):
            key = (j, float(dt))
            if key not in factors:
                factors[key] = lu_factor(eye - dt * L)
            cols = tab.columns_of(j)
            rhs = coeffs[:, cols].copy()
            if op.tip_held:
                rhs[0] = tip[cols]
            if op.outer_held:
                rhs[-1] = outer[cols]
            new[:, cols] = lu_solve(factors[key], rhs)
        coeffs = new
        if count in marks:
            out.append(tab.to_nodal(coeffs))
    return out


def _nodal_mode_profile(table: SpectrumTable, j: int) -> np.ndarray:
    col = table.basis[:, table.columns_of(j)[0]]
    return col / np.abs(col).max()


def flat_bump(table: SpectrumTable, c0: float, m: float, modes: dict,
              inner: float = 0.4, outer: float = 0.9) -> Callable:
    """Sampler for ``c0**m + omega(x) exp(-1/x) b(y)``.

    ``b = sum_j a_j (1 + phi_j / max|phi_j|)`` with ``phi_j`` the first
    basis function of eigenspace ``j``, so ``b >= 0`` and each listed mode
    is present. The perturbation vanishes to infinite order at the tip.
    """
    bump = np.zeros(table.weights.size)
    for j, amp in modes.items():
        bump += amp * (1.0 + _nodal_mode_profile(table, int(j)))

    def sample(x, nodes):
        return c0**m + (cutoff(x, inner, outer) * np.exp(-1.0 / x)) * bump[None, :]
    return sample


def harmonic_seed(table: SpectrumTable, chart: IndicialChart, c: float, delta: float,
                  j: int, column: int = 0) -> Callable:
    """Sampler for ``c + delta x**(-q_j^-) e`` with ``e`` a basis function of
    eigenspace ``j``; a steady state of the straight-cone flow."""
    e = table.basis[:, table.columns_of(j)[column]]
    q = chart.q_minus(j)

    def sample(x, nodes):
        return c + delta * x ** (-q) * e[None, :]
    return sample
