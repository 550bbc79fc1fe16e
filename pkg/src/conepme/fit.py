"""Extraction of near-tip exponents from solver snapshots.

Snapshots are projected onto the cross-section eigenbasis; each nonzero
mode's radial profile is then fitted on a window ``[x_lo, x_hi]`` in two
stages:

1. a free regression of ``ln|p|`` against ``ln x`` whose slope is the
   exponent estimate;
2. least squares on a dictionary of predicted powers ``x**e`` plus one
   ``x**e ln x`` column, giving amplitudes and deciding whether a log
   term is present.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, IndicialError
from .indicial import IndicialChart, ParameterSet, interpolation_window
from .solver import Trajectory
from .spectrum import SpectrumTable

__all__ = [
    "FitResult",
    "ModeFit",
    "FitReport",
    "project_modes",
    "mode_profile",
    "fit_exponent",
    "verify_prediction",
    "default_window",
    "check_window",
]

LOG_GAIN = 10.0
MAX_CONDITION = 1e12
# power-only fits this good leave nothing for a log column to explain
LOG_FLOOR = 1e-4


def default_window(x_min: float) -> tuple[float, float]:
    """``[10 x_min, 0.05]``: clear of the tip closure and of the cutoff."""
    return (10 * x_min, 0.05)


def check_window(window, x_min: float) -> tuple[float, float]:
    """Validate that ``window`` lies in ``[10 x_min, 0.1]`` and is increasing."""
    lo, hi = (float(w) for w in window)
    if not (lo < hi):
        raise FitError(f"fit window {window} is not increasing")
    if lo < 10 * x_min * (1 - 1e-12) or hi > 0.1 * (1 + 1e-12):
        raise FitError(f"fit window {window} outside [{10 * x_min:.3g}, 0.1]")
    return lo, hi


def project_modes(V, table: SpectrumTable) -> np.ndarray:
    """Eigenbasis coefficients of nodal snapshot values (``n_r x K``)."""
    V = getattr(V, "V", V)
    return table.to_coeffs(np.asarray(V, dtype=float))


def mode_profile(coeffs: np.ndarray, table: SpectrumTable, j: int, x=None, window=None):
    """Radial profile of eigenspace ``j``.

    Within a multi-dimensional eigenspace the basis column with the largest
    norm on the window (whole grid if none is given) is returned.

    Returns
    -------
    (ndarray, int)
        Profile and the basis column it belongs to.
    """
    cols = table.columns_of(j)
    sel = slice(None)
    if x is not None and window is not None:
        sel = (x >= window[0]) & (x <= window[1])
    norms = np.linalg.norm(coeffs[sel][:, cols], axis=0)
    col = int(cols[int(np.argmax(norms))])
    return coeffs[:, col], col


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit_exponent`.

    Attributes
    ----------
    exponent : float
        Free log-log slope, or the log-corrected slope when ``log_flag``.
    amplitude : float
        Coefficient of the dictionary power nearest the slope.
    log_flag : bool
        The ``x**e ln x`` column reduced the residual at least tenfold, and
        the power-only fit left a relative residual above ``LOG_FLOOR``.
    residual : float
        Relative residual of the selected dictionary fit.
    slope : float
        Free log-log slope.
    condition : float
        Condition number of the column-normalised dictionary.
    dictionary : tuple of float
    coefficients : tuple of float
        Dictionary coefficients; the log column comes last when flagged.
    window : tuple of float
    """

    exponent: float
    amplitude: float
    log_flag: bool
    residual: float
    slope: float
    condition: float
    dictionary: tuple
    coefficients: tuple
    window: tuple
    residual_without_log: float = np.nan
    residual_with_log: float = np.nan


def _lstsq(design, target):
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    res = np.linalg.norm(design @ coef - target)
    return coef, res


def fit_exponent(x, profile, window, basis_hint=None) -> FitResult:
    """Fit ``profile(x) ~ A x**e`` on ``window``.

    Parameters
    ----------
    x, profile : array_like
        Radial nodes and the profile, with any constant part removed.
    window : (float, float)
    basis_hint : sequence of float, optional
        Predicted exponents for the dictionary stage; the free slope is
        used when absent.

    Raises
    ------
    FitError
        "window too narrow" below one decade, "no decaying part" for
        profiles that vanish or do not decay toward the tip, and
        "degenerate dictionary" for near-collinear dictionaries.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(profile, dtype=float)
    lo, hi = window
    if hi / lo < 10:
        raise FitError("window too narrow: less than one decade")
    sel = (x >= lo) & (x <= hi)
    if sel.sum() < 6:
        raise FitError("window too narrow: fewer than 6 nodes")
    xs, ps = x[sel], p[sel]
    scale = np.abs(ps).max()
    if not scale > 0 or np.any(ps == 0):
        raise FitError("no decaying part: profile vanishes on the window")
    lx, lp = np.log(xs), np.log(np.abs(ps))
    design = np.column_stack([np.ones_like(lx), lx])
    (_, slope), _ = _lstsq(design, lp)
    if slope < 1e-3:
        raise FitError("no decaying part: profile does not decay toward the tip")

    hints = sorted({float(h) for h in (basis_hint if basis_hint else [slope])})
    lead = min(hints, key=lambda h: abs(h - slope))
    power_cols = np.column_stack([xs**h for h in hints])
    with_log = np.column_stack([power_cols, xs**lead * lx])
    norms = np.linalg.norm(with_log, axis=0)
    cond = float(np.linalg.cond(with_log / norms))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise FitError(f"degenerate dictionary (condition {cond:.3g})")
    coef_a, res_a = _lstsq(power_cols, ps)
    coef_b, res_b = _lstsq(with_log, ps)
    pnorm = np.linalg.norm(ps)
    log_flag = bool(res_a > LOG_FLOOR * pnorm and res_a >= LOG_GAIN * res_b)
    idx = hints.index(lead)
    if log_flag:
        corrected = lp - np.log(np.abs(lx))
        (_, exponent), _ = _lstsq(design, corrected)
        coefs, res = coef_b, res_b
    else:
        exponent, coefs, res = slope, coef_a, res_a
    return FitResult(float(exponent), float(coefs[idx]), log_flag, float(res / pnorm),
                     float(slope), cond, tuple(hints), tuple(float(c) for c in coefs),
                     (float(lo), float(hi)), float(res_a / pnorm), float(res_b / pnorm))


@dataclass(frozen=True)
class ModeFit:
    t: float
    j: int
    column: int
    predicted: float
    fitted: float
    rel_error: float
    tolerance: float
    asserted: bool
    passed: bool
    amplitude: float
    residual: float
    log_flag: bool
    condition: float
    remainder_norm: float
    message: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


CSV_FIELDS = ["t", "mode", "predicted", "exponent", "rel_error", "amplitude",
              "residual", "log_flag", "asserted", "passed"]


@dataclass
class FitReport:
    """Per-mode fits of a trajectory against the predicted exponents."""

    rows: list
    window: tuple
    r: int
    direct: bool
    times: list
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows if row.asserted)

    def for_mode(self, j: int) -> list:
        return [row for row in self.rows if row.j == j]

    def amplitude_trajectory(self, j: int) -> list[tuple[float, float]]:
        return [(row.t, row.amplitude) for row in self.for_mode(j)]

    def to_dict(self) -> dict:
        return {"window": list(self.window), "r": self.r, "direct": self.direct,
                "times": list(self.times), "params": self.params, "passed": self.passed,
                "modes": [row.to_dict() for row in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(CSV_FIELDS)
        for row in self.rows:
            w.writerow([f"{row.t:.17g}", row.j, f"{row.predicted:.17g}", f"{row.fitted:.17g}",
                        f"{row.rel_error:.17g}", f"{row.amplitude:.17g}", f"{row.residual:.17g}",
                        int(row.log_flag), int(row.asserted), int(row.passed)])
        return buf.getvalue()

    def exponent_curves_csv(self) -> str:
        """Plot data: one row per time, one ``exponent_j`` column per mode."""
        modes = sorted({row.j for row in self.rows})
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["t"] + [f"exponent_{j}" for j in modes])
        for t in self.times:
            vals = {row.j: row.fitted for row in self.rows if row.t == t}
            w.writerow([f"{t:.17g}"] + [f"{vals.get(j, np.nan):.17g}" for j in modes])
        return buf.getvalue()


def _remainder_norm(x, p, hints, coefs, window, weight_exp, power=2.0):
    """Weighted ``L^power(dx/x)`` size of the fit remainder on the window."""
    sel = (x >= window[0]) & (x <= window[1])
    xs = x[sel]
    model = sum(c * xs**h for c, h in zip(coefs, hints))
    integrand = np.abs(xs**weight_exp * (p[sel] - model)) ** power
    return float(np.trapezoid(integrand, np.log(xs)) ** (1 / power))


def verify_prediction(trajectory: Trajectory, chart: IndicialChart, params: ParameterSet,
                      times=None, window=None, tolerances=None, modes=None) -> FitReport:
    """Fit every mode ``j = 1..k`` and compare with ``-q_j^-``.

    Modes up to the interpolation index ``r`` are asserted; the rest are
    reported only. Tolerances default to 5% for mode 1 and 10% for higher
    modes. A window outside ``[10 x_min, 0.1]`` raises :class:`FitError`.
    """
    try:
        iw = interpolation_window(chart, params)
        r, direct = iw.r, iw.direct
    except IndicialError:
        r, direct = 0, False
    grid, table = trajectory.grid, trajectory.table
    x = grid.x
    window = check_window(window or default_window(grid.x_min), grid.x_min)
    if times is None:
        times = [t for t in trajectory.times if t > 0]
    tolerances = tolerances or {}
    modes = modes or list(range(1, chart.k + 1))
    hints = [-chart.q_minus(i) for i in range(1, chart.k + 1)]
    weight_exp = (chart.n + 1) / 2 - float(params.gamma)
    rows = []
    for t in times:
        coeffs = project_modes(trajectory.snapshot_at(t), table)
        for j in modes:
            predicted = -chart.q_minus(j)
            tol = tolerances.get(j, 0.05 if j == 1 else 0.10)
            asserted = j <= r
            profile, col = mode_profile(coeffs, table, j, x, window)
            try:
                res = fit_exponent(x, profile, window, hints)
            except FitError as exc:
                rows.append(ModeFit(t, j, col, predicted, np.nan, np.nan, tol, asserted,
                                    False, np.nan, np.nan, False, np.nan, np.nan, str(exc)))
                continue
            rel = abs(res.exponent - predicted) / abs(predicted)
            rem = _remainder_norm(x, profile, res.dictionary,
                                  res.coefficients[:len(res.dictionary)], window, weight_exp)
            rows.append(ModeFit(t, j, col, predicted, res.exponent, rel, tol, asserted,
                                rel <= tol, res.amplitude, res.residual, res.log_flag,
                                res.condition, rem))
    return FitReport(rows, tuple(window), r, direct, list(times), params.to_dict())
