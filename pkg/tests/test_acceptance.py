"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL criterion N`` line with the
measured figures before asserting, so the verdicts survive output capture.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from conepme.asymp import AsympExpansion, invert, multiply, real_power
from conepme.errors import ConstraintError, GreenError, IndicialError
from conepme.fit import default_window, fit_exponent, mode_profile, project_modes, verify_prediction
from conepme.geometry import ConeGeometry, CrossSection, WarpData
from conepme.green import contour_quadrature_oracle, full_space, residue_closed_form
from conepme.indicial import (ParameterSet, indicial_roots, interpolation_window, mellin_symbol,
                              membership_exponent_test, midpoint_gamma, validate_parameters)
from conepme.norms import membership_suite
from conepme.solver import (ConeSolver, SolverConfig, discrete_steady_state, flat_bump,
                            harmonic_seed, linear_reference)
from conepme.spectrum import spectrum_analytic

RHO13 = Fraction(13, 10)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def chart_of(cs, J):
    return indicial_roots(spectrum_analytic(cs, J))


# 1 -------------------------------------------------------------------------

def test_criterion_1_indicial_exactness(capsys):
    exact_ok = True
    for n in (2, 3):
        ch = chart_of(CrossSection.sphere(n), 10)
        for r in ch.roots:
            exact_ok &= isinstance(r.minus, Fraction) and r.minus == -r.j
            exact_ok &= isinstance(r.plus, Fraction) and r.plus == r.j + n - 1
    worst = 0.0
    for rho in (Fraction(4, 5), 1, RHO13, 0.7, 2.3):
        ch = chart_of(CrossSection.circle(rho), 8)
        tab = ch.spectrum
        # apply z^2 - (n-1) z + Delta to the nodal eigenvectors via spectral differentiation
        (D,) = tab.derivatives
        for r in ch.roots:
            for q in (float(r.q_minus), float(r.q_plus)):
                for col in tab.columns_of(r.j):
                    e = tab.basis[:, col]
                    res = q * q * e + D @ (D @ e)
                    worst = max(worst, np.abs(res).max() / max(1.0, q * q))
                worst = max(worst, abs(mellin_symbol(ch, q)[r.j]) / max(1.0, q * q))
    ok = exact_ok and worst < 1e-12
    report(capsys, 1, ok, f"sphere roots exact={exact_ok}, circle symbol residual {worst:.2e} (tol 1e-12)")


# 2 -------------------------------------------------------------------------

def synthetic_warp(table, rng):
    K = table.size
    hp = np.zeros(K)
    hp[:min(K, 6)] = 0.3 * rng.normal(size=min(K, 6))
    dp = rng.normal(size=(K, K))
    dp[:, table.columns_of(0)] = 0.0
    return WarpData(hp, 0.2 * dp)


def generator_data(ch, pole, hat):
    """Mellin data whose residue at ``pole`` is the hat generator ``hat``."""
    ((e, ell),) = hat.keys
    c = hat.coefficient(e, ell)
    if pole.order == 2:
        return np.array([-c, 0 * c]) if ell else np.array([0 * c, c])
    s = float(pole.value)
    other = ch.q_plus(pole.j) if pole.sign < 0 else ch.q_minus(pole.j)
    return np.array([(s - other) * c])


def test_criterion_2_residue_fidelity(capsys):
    rng = np.random.default_rng(2)
    worst, checked = 0.0, 0
    cases = [(CrossSection.circle(Fraction(4, 5)), 4), (CrossSection.circle(1), 4),
             (CrossSection.circle(RHO13), 4), (CrossSection.sphere(2), 3)]
    for cs, J in cases:
        ch = chart_of(cs, J)
        warp = synthetic_warp(ch.spectrum, rng)
        gamma = midpoint_gamma(ch)
        for pole in ch.poles():
            s = float(pole.value)
            try:
                fs = full_space(ch, warp, pole, gamma)
            except GreenError:
                fs = full_space(ch, warp, pole, gamma + Fraction(1, 7))
            for hat, full in zip(fs.hat_basis, fs.full_basis):
                mu = generator_data(ch, pole, hat)
                plain = contour_quadrature_oracle(ch, s, mu, nodes=128)
                warped = contour_quadrature_oracle(ch, s, mu, nodes=128, warp=warp)
                worst = max(worst, (plain - hat).max_coeff_norm, (warped - full).max_coeff_norm)
                checked += 1
            mu = rng.normal(size=(3, ch.spectrum.size))
            a = residue_closed_form(ch, pole, mu, warp)
            b = contour_quadrature_oracle(ch, s, mu, nodes=128, warp=warp)
            worst = max(worst, (a - b).max_coeff_norm)

    # n = 1 double pole: Mu = e0 + z e1 gives -e0 ln x + e1
    ch = chart_of(CrossSection.circle(1), 3)
    e0, e1 = np.zeros(ch.spectrum.size), np.zeros(ch.spectrum.size)
    e0[0], e1[0] = 1.0, 0.5
    g = contour_quadrature_oracle(ch, 0.0, np.array([e0, e1]))
    log_gap = max(np.abs(g.coefficient(0.0, 1) + e0).max(), np.abs(g.coefficient(0.0, 0) - e1).max())

    # warped correction terms against their hand-derived values
    tab = ch.spectrum
    hp = np.zeros(tab.size)
    hp[0] = 0.7 * math.sqrt(tab.volume)
    warp = WarpData(hp, np.zeros((tab.size, tab.size)))
    fs = full_space(ch, warp, 0, midpoint_gamma(ch))
    i = [k for k, h in enumerate(fs.hat_basis) if h.keys == [(0.0, 1)]][0]
    n1_gap = abs(fs.corrections[i].coefficient(1.0)[0] + 0.7)

    sph = chart_of(CrossSection.sphere(2), 3)
    st = sph.spectrum
    hp = np.zeros(st.size)
    hp[st.columns_of(1)[1]] = 1.0
    fs2 = full_space(sph, WarpData(hp, np.zeros((st.size, st.size))), 0, midpoint_gamma(sph))
    e = np.zeros(st.size)
    e[0] = 1.0
    target = np.zeros(st.size)
    cols = st.columns_of(1)
    target[cols] = -(st.multiplication_matrix(hp) @ e)[cols] / 3
    n2_gap = np.abs(fs2.corrections[0].coefficient(1.0) - target).max()

    ok = worst < 1e-8 and log_gap < 1e-8 and n1_gap < 1e-12 and n2_gap < 1e-12
    report(capsys, 2, ok, f"{checked} generators on 4 cones, max closed-form/oracle gap {worst:.2e}; "
           f"double-pole log gap {log_gap:.2e}; warp corrections n=1 {n1_gap:.1e}, n=2 {n2_gap:.1e}")


# 3 -------------------------------------------------------------------------

def random_expansion(table, rng, W=3.0):
    items = [(0.0, 0, np.r_[rng.uniform(2, 4) * math.sqrt(table.volume), np.zeros(table.size - 1)])]
    for e in (1 / 1.3, 2 / 1.3, 1.0, 1.3):
        c = np.zeros(table.size)
        c[:5] = 0.4 * rng.normal(size=5)
        items.append((e, int(rng.integers(0, 2)), c))
    return AsympExpansion(table, items, W, max_log=12)


def test_criterion_3_algebra(capsys):
    table = spectrum_analytic(CrossSection.circle(RHO13), 6)
    chart = indicial_roots(table)
    rng = np.random.default_rng(3)
    pool = [random_expansion(table, rng) for _ in range(100)]
    ring, inv_ok, power = 0.0, True, 0.0
    for i, a in enumerate(pool):
        b, c = pool[(i + 1) % 100], pool[(i + 7) % 100]
        scale = max(1.0, (a * b * c).max_coeff_norm)
        ring = max(ring, ((a * b) * c - a * (b * c)).max_coeff_norm / scale,
                   (a * (b + c) - (a * b + a * c)).max_coeff_norm / scale,
                   (a * b - b * a).max_coeff_norm / scale,
                   ((a + b) + c - (a + (b + c))).max_coeff_norm / scale)
        p = multiply(a, invert(a))
        inv_ok &= p.keys == [(0.0, 0)] and np.allclose(table.to_nodal(p.coefficient(0.0)), 1.0,
                                                       rtol=0, atol=1e-12)
        for m in (0.5, 2.0, 3.0):
            back = real_power(real_power(a, m), 1 / m)
            power = max(power, (back - a).max_coeff_norm / a.max_coeff_norm)
    flat = True
    W = 3.0
    for j in range(1, chart.k + 1):
        e = -chart.q_minus(j)
        N = math.ceil(W / e)
        gen = AsympExpansion.mode(table, e, table.columns_of(j)[0], weight=W)
        prod = gen
        for _ in range(N - 1):
            prod = prod * gen
        flat &= prod.is_zero()
    ok = ring < 1e-12 and inv_ok and power < 1e-10 and flat
    report(capsys, 3, ok, f"ring axioms max rel {ring:.1e}; inverse exact={inv_ok}; "
           f"power round trip {power:.1e}; flat products={flat}")


# 4 -------------------------------------------------------------------------

def test_criterion_4_harmonic_steady_states(capsys):
    cone = ConeGeometry(CrossSection.circle(RHO13))
    lines, ok = [], True
    for m in (0.5, 1.0, 2.0):
        for j in (1, 2):
            errs, drifts = [], []
            for n_r in (200, 400, 800):
                s = ConeSolver(SolverConfig(m=m, cone=cone, x_min=1e-4, n_r=n_r, t_end=0.1))
                assert j <= s.chart.k
                seed = harmonic_seed(s.table, s.chart, 2.0, 0.5, j)
                state = s.initial_state(seed)
                errs.append(np.abs(discrete_steady_state(s, state) - state.V).max())
                traj = s.evolve(seed, snapshot_times=np.linspace(0, 0.1, 11)[1:])
                drifts.append(max(np.abs(snap.V - state.V).max() for snap in traj.snapshots))
            ratios = [errs[0] / errs[1], errs[1] / errs[2]]
            good = all(d < e for d, e in zip(drifts, errs)) and all(3.5 <= q <= 4.5 for q in ratios)
            ok &= good
            lines.append(f"m={m:g} j={j} ratios {ratios[0]:.2f},{ratios[1]:.2f} "
                         f"drift/E {max(d / e for d, e in zip(drifts, errs)):.4f}")
    report(capsys, 4, ok, "; ".join(lines))


# 5 -------------------------------------------------------------------------

def _amplitudes(V, solver, window, hints):
    coeffs = project_modes(V, solver.table)
    out = []
    for j in (1, 2):
        prof, _ = mode_profile(coeffs, solver.table, j, solver.grid.x, window)
        out.append(fit_exponent(solver.grid.x, prof, window, hints).amplitude)
    return np.array(out)


def test_criterion_5_central_experiment(capsys):
    cone = ConeGeometry(CrossSection.circle(RHO13))
    e1, e2 = 1 / 1.3, 2 / 1.3
    worst1 = worst2 = amp_gap = 0.0
    ok = True
    for m in (1.0, 2.0):
        for tip in ("regularity", "truncation-dirichlet"):
            for n_r in (400, 800):
                cfg = SolverConfig(m=m, cone=cone, n_r=n_r, t_end=0.05, tip_closure=tip,
                                   snapshot_times=(0.02, 0.05))
                s = ConeSolver(cfg)
                traj = s.evolve(flat_bump(s.table, 1.0, m, {1: 0.5, 2: 0.3}))
                params = ParameterSet(midpoint_gamma(s.chart), 8, 8, 1)
                rep = verify_prediction(traj, s.chart, params, times=[0.02, 0.05])
                for t in (0.02, 0.05):
                    r1 = [r for r in rep.for_mode(1) if r.t == t][0]
                    r2 = [r for r in rep.for_mode(2) if r.t == t][0]
                    d1 = abs(r1.fitted - e1) / e1
                    d2 = abs(r2.fitted - e2) / e2
                    worst1, worst2 = max(worst1, d1), max(worst2, d2)
                    ok &= d1 <= 0.05 and d2 <= 0.10
                if m == 1.0:
                    window = default_window(cfg.x_min)
                    hints = [-s.chart.q_minus(i) for i in range(1, s.chart.k + 1)]
                    steps = np.cumsum(traj.dt_history)
                    marks = [int(np.argmin(np.abs(steps - t))) + 1 for t in (0.02, 0.05)]
                    refs = linear_reference(s, traj.initial, traj.dt_history, marks=marks)
                    for t, ref in zip((0.02, 0.05), refs):
                        got = _amplitudes(traj.snapshot_at(t).V, s, window, hints)
                        want = _amplitudes(ref, s, window, hints)
                        amp_gap = max(amp_gap, float(np.max(np.abs(got - want) / np.abs(want))))
    ok &= amp_gap < 1e-6
    report(capsys, 5, ok, f"max rel error mode 1 {worst1:.4f} (tol 0.05), mode 2 {worst2:.4f} "
           f"(tol 0.10) over m, closure, refinement; m=1 amplitude gap {amp_gap:.1e} (tol 1e-6)")


# 6 -------------------------------------------------------------------------

def test_criterion_6_membership(capsys):
    rng = np.random.default_rng(6)
    charts = [indicial_roots(spectrum_analytic(CrossSection.circle(RHO13), 4)),
              indicial_roots(spectrum_analytic(CrossSection.sphere(2), 3))]
    rows = []
    while len(rows) < 20:
        ch = charts[len(rows) % 2]
        e, sigma = rng.uniform(-1.5, 2.0), rng.uniform(-0.5, 2.5)
        if abs(e - (sigma - (ch.n + 1) / 2)) <= 0.1:
            continue
        (row,) = membership_suite(ch, [(e, int(rng.integers(0, 2)))], sigma, 2, n_r=900)
        assert row.analytic == ("convergent" if membership_exponent_test(-e, sigma, ch.n)
                                else "divergent")
        rows.append(row)
    agreement = sum(r.agree for r in rows) / len(rows)
    kinds = {r.analytic for r in rows}
    boundary = []
    for ch in charts:
        sigma = 1.0
        boundary += membership_suite(ch, [(sigma - (ch.n + 1) / 2, 0), (sigma - (ch.n + 1) / 2, 1)],
                                     sigma, 2)
    indeterminate = all(r.analytic == r.quadrature == "indeterminate" for r in boundary)
    ok = agreement == 1.0 and indeterminate and kinds == {"convergent", "divergent"}
    report(capsys, 6, ok, f"{len(rows)} off-boundary cases, agreement {agreement:.0%}; "
           f"{len(boundary)} boundary cases indeterminate={indeterminate}")


# 7 -------------------------------------------------------------------------

G = Fraction(4, 5)  # (n+1)/2 - gamma - 2 = -1.8 on the circle

# (gamma, p, q, s, epsilon) -> expected violated constraints, interpolation (r, direct) or error
PARAMETER_TABLE = [
    ((G, 8, 40, 1, 0.01), set(), (2, True)),
    ((G, 8, 4, 1, 0.01), set(), (1, False)),
    ((G, 8, 3, 1, 0.01), set(), (1, False)),
    ((G, 3, 40, 1, 0.01), set(), (2, True)),
    ((G, 8, 2, 1, 0.01), {"pq"}, None),
    ((G, Fraction(11, 5), 10, 1, 0.01), {"pq"}, None),
    ((G, 8, 40, Fraction(-1, 2), 0.01), set(), (2, True)),
    ((G, 8, 40, Fraction(-4, 5), 0.01), {"s"}, None),
    ((Fraction(-1, 2), 8, 40, 1, 0.01), {"gamma_new"}, None),
    ((Fraction(11, 10), 8, 40, 1, 0.01), {"gamma_new"}, None),
    ((1 - Fraction(10, 13), 8, 40, 1, 0.01), {"gamma_new", "pole-hit"}, None),
    ((G, 8, 40, 1, -2 / 1.3 + 1.8 - 0.05), set(), "adjust epsilon"),
]


def oracle_violations(gamma, p, q, s, q_k, poles):
    """The inequalities evaluated directly, n = 1."""
    lo = 1 - float(gamma) - 2
    bad = set()
    if not (-2 < lo < q_k):
        bad.add("gamma_new")
    if any(abs((1 - float(gamma)) - x) < 1e-12 for x in poles):
        bad.add("pole-hit")
    if not (2 / p + 2 / q < 1 and lo + 4 / q < 0):
        bad.add("pq")
    if not (s > -1 + 2 / p + 2 / q):
        bad.add("s")
    return bad


def test_criterion_7_parameter_arithmetic(capsys):
    ch = chart_of(CrossSection.circle(RHO13), 6)
    q_minus = [ch.q_minus(j) for j in range(len(ch.roots))]
    poles = [float(r.q_plus) for r in ch.roots] + q_minus
    mismatches = []
    for (gamma, p, q, s, eps), bad, interp in PARAMETER_TABLE:
        params = ParameterSet(gamma, p, q, s, eps)
        assert oracle_violations(gamma, float(p), float(q), float(s), q_minus[ch.k], poles) == bad
        try:
            validate_parameters(ch, params)
            got = set()
        except ConstraintError as exc:
            got = set(exc.constraints)
        if got != bad:
            mismatches.append((params, got, bad))
            continue
        if bad:
            continue
        try:
            w = interpolation_window(ch, params)
            result = (w.r, w.direct)
            bound = 1 - float(gamma) - 2 + 2 / float(q) + eps
            if abs(w.bound - bound) > 1e-12:
                mismatches.append((params, w.bound, bound))
        except IndicialError as exc:
            result = "adjust epsilon" if "adjust epsilon" in str(exc) else str(exc)
        if result != interp:
            mismatches.append((params, result, interp))

    # r staircase as q grows: the bound -1.8 + 2/q + 0.01 crosses q_2^- near q = 7.95
    qs = [3, 4, 6, Fraction(79, 10), 8, 40, 400]
    stair = [interpolation_window(ch, ParameterSet(G, 8, q, 1)).r for q in qs]
    ok = not mismatches and stair == [1, 1, 1, 1, 2, 2, 2]
    report(capsys, 7, ok, f"{len(PARAMETER_TABLE)} scripted parameter sets, mismatches {len(mismatches)}; "
           f"r staircase over q={[float(x) for x in qs]}: {stair}")
