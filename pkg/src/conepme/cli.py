"""Command-line pipeline: spectrum, indicial data, bases, evolution, fits, norms.

Every subcommand accepts ``--config``, ``--out``, ``--seed`` and
``--snapshot-times``; outputs are JSON reports, CSV tables and ``.npz``
snapshot matrices under the output directory. Exit codes are 0 on success,
1 for parse errors, 2 for constraint violations, 3 for solver failures and
4 for I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from .asymp import AsympExpansion, default_weight
from .config import RunConfig, load_config
from .errors import (AlgebraError, ConeError, ConfigError, ConstraintError, FitError, GreenError,
                     IndicialError, SolverError)
from .fit import FitReport, verify_prediction
from .green import full_space
from .indicial import (IndicialChart, indicial_roots, interpolation_window,
                       validate_parameters)
from .norms import membership_csv, membership_suite
from .solver import (ConeSolver, SolverState, Trajectory, flat_bump, harmonic_seed)

__all__ = ["main", "build_parser", "RunRecord", "Pipeline", "EXIT_CODES"]

EXIT_CODES = {"ok": 0, "parse": 1, "constraint": 2, "solver": 3, "io": 4}
COMMANDS = ("indicial", "basis", "evolve", "fit", "norms", "all")


def jsonable(obj):
    """Convert numpy, Fraction and container values for ``json.dumps``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        return float(obj)
    return obj


def write_json(path: Path, data) -> None:
    # repr of a float round-trips exactly
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunRecord:
    """Provenance of one CLI invocation."""

    config_hash: str
    command: str
    started: str
    finished: str = ""
    reports: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "command": self.command,
                "started": self.started, "finished": self.finished,
                "reports": self.reports, "summary": self.summary}


class Pipeline:
    """Lazily computed stages shared by the subcommands."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self._chart = None
        self._params = None

    @property
    def chart(self) -> IndicialChart:
        if self._chart is None:
            self._chart = indicial_roots(self.cfg.cone.table())
        return self._chart

    @property
    def params(self):
        if self._params is None:
            self._params = self.cfg.parameters.resolve(self.chart)
        return self._params

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats

    # stages
    def indicial(self) -> dict:
        chart, params = self.chart, self.params
        domain = validate_parameters(chart, params)
        report = {"cross_section": self.cfg.cone.cross_section().to_dict(),
                  "chart": chart.to_dict(), "parameters": params.to_dict(),
                  "interval": list(domain.interval), "domain": domain.to_dict()}
        try:
            report["interpolation"] = interpolation_window(chart, params).to_dict()
        except IndicialError as exc:
            report["interpolation"] = {"error": str(exc)}
        write_json(self.path("indicial.json"), report)
        return report

    def basis(self) -> dict:
        chart, params = self.chart, self.params
        domain = validate_parameters(chart, params)
        warp = self.cfg.cone.warp_data(chart.spectrum)
        labels = list(domain.included) + [domain.constant_label]
        spaces = [full_space(chart, warp, label, params.gamma).to_dict() for label in labels]
        report = {"gamma": float(params.gamma), "warped": warp is not None, "spaces": spaces}
        write_json(self.path("basis.json"), report)
        return report

    def solver(self) -> ConeSolver:
        return ConeSolver(self.cfg.solver_config())

    def initial_data(self, solver: ConeSolver):
        init = self.cfg.experiment.initial
        m = self.cfg.experiment.m
        if init["kind"] == "flat-bump":
            return flat_bump(solver.table, init["c0"], m, init["modes"], init["inner"], init["outer"])
        if init["kind"] == "harmonic-seed":
            return harmonic_seed(solver.table, solver.chart, init["c"], init["delta"],
                                 int(init["j"]), int(init["column"]))
        c = float(init["c0"]) ** m
        return lambda x, nodes: np.full((x.shape[0], nodes.shape[0]), c)

    def save_trajectory(self, traj: Trajectory) -> None:
        if self.wants("npz"):
            np.savez(self.path("snapshots.npz"), times=np.array(traj.times),
                     r=traj.grid.r, x=traj.grid.x, nodes=traj.table.nodes,
                     values=np.stack([s.V for s in traj.snapshots]),
                     tip_values=traj.snapshots[0].tip_values,
                     outer_values=traj.snapshots[0].outer_values)
        if self.wants("csv"):
            buf = io.StringIO()
            w = csv.writer(buf)
            w.writerow(["t", "dt", "min", "max", "outer_flux"])
            for d in traj.diagnostics:
                w.writerow([f"{d[k]:.17g}" for k in ("t", "dt", "min", "max", "outer_flux")])
            self.path("diagnostics.csv").write_text(buf.getvalue())

    def load_trajectory(self) -> Trajectory:
        solver = self.solver()
        data = np.load(self.out / "snapshots.npz")
        if data["values"].shape[1:] != (solver.grid.n_r, solver.table.weights.size):
            raise ConfigError("stored snapshots do not match the configured grid")
        traj = Trajectory(solver.cfg, solver.grid, solver.table)
        tip, outer = data["tip_values"], data["outer_values"]
        for t, V in zip(data["times"], data["values"]):
            traj.times.append(float(t))
            traj.snapshots.append(SolverState(float(t), np.array(V), tip, outer))
        return traj

    def fit(self, traj: Trajectory) -> FitReport:
        opts = self.cfg.experiment.fit
        tol = {int(k): float(v) for k, v in (opts["tolerances"] or {}).items()}
        window = tuple(opts["window"]) if opts["window"] else None
        report = verify_prediction(traj, self.chart_for(traj), self.params, window=window,
                                   tolerances=tol or None, modes=opts["modes"])
        if self.wants("json"):
            write_json(self.path("fit.json"), report.to_dict())
        if self.wants("csv"):
            self.path("fit.csv").write_text(report.to_csv())
            self.path("exponents_vs_t.csv").write_text(report.exponent_curves_csv())
        return report

    def chart_for(self, traj: Trajectory) -> IndicialChart:
        """Indicial data of the table the trajectory was computed on."""
        return indicial_roots(traj.table, self.cfg.cone.geometry().n)

    def expansion_summary(self, traj: Trajectory, report: FitReport) -> dict:
        """Fitted ``v`` expansion at the last time and the inherited ``u = v**(1/m)``."""
        if not report.rows:
            return {}
        chart = self.chart_for(traj)
        t = report.times[-1]
        rows = [row for row in report.rows if row.t == t and math.isfinite(row.amplitude)]
        tab = traj.table
        tip = tab.to_coeffs(traj.snapshot_at(t).V)[0]
        weight = default_weight(chart)
        const = np.zeros(tab.size)
        const[tab.columns_of(0)] = tip[tab.columns_of(0)]
        v = AsympExpansion(tab, [(0.0, 0, const)], weight)
        for row in rows:
            v = v + AsympExpansion.mode(tab, row.predicted, row.column, row.amplitude, weight=weight)
        out = {"t": t, "v": v.render()}
        try:
            out["u"] = v.real_power(1.0 / self.cfg.experiment.m).render()
        except AlgebraError as exc:
            out["u_error"] = str(exc)
        return out

    def evolve(self) -> tuple[Trajectory, FitReport, dict]:
        solver = self.solver()
        traj = solver.evolve(self.initial_data(solver))
        self.save_trajectory(traj)
        report = self.fit(traj)
        v0, vT = traj.initial.V, traj.final.V
        drift = float(np.abs(vT - v0).max() / np.abs(v0).max())
        tol = self.cfg.experiment.stationary_tol
        summary = {
            "times": traj.times,
            "snapshots": len(traj.snapshots),
            "modes": [{"t": r.t, "mode": r.j, "predicted": r.predicted, "fitted": r.fitted,
                       "rel_error": r.rel_error, "asserted": r.asserted, "passed": r.passed}
                      for r in report.rows],
            "fit_passed": report.passed,
            "relative_drift": drift,
            "stationarity": "stationary" if drift < tol else "non-stationary",
            "expansion": self.expansion_summary(traj, report),
        }
        write_json(self.path("summary.json"), summary)
        return traj, report, summary

    def norms(self) -> dict:
        opts = self.cfg.experiment.norms
        chart = self.chart
        n = chart.n
        sigma = float(self.params.gamma) if opts["sigma"] is None else float(opts["sigma"])
        if opts["terms"] is None:
            rng = np.random.default_rng(self.cfg.seed)
            threshold = sigma - (n + 1) / 2
            terms = []
            for _ in range(int(opts["count"])):
                offset = rng.uniform(0.1, 1.0) * rng.choice([-1.0, 1.0])
                terms.append((threshold + offset, int(rng.integers(0, 2))))
        else:
            terms = [(float(e), int(l)) for e, l in opts["terms"]]
        rows = membership_suite(chart, terms, sigma, float(opts["p"]), n, s=int(opts["s"]))
        self.path("norms.csv").write_text(membership_csv(rows))
        decided = [r for r in rows if r.analytic != "indeterminate"]
        agreement = sum(r.agree for r in decided) / len(decided) if decided else 1.0
        return {"sigma": sigma, "rows": len(rows), "decided": len(decided), "agreement": agreement}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _times(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid snapshot times {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conepme", description="Porous medium flow on conic manifolds: "
                     "indicial data, asymptotic bases, evolution and exponent fits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="RNG seed override")
        p.add_argument("--snapshot-times", type=_times, help="comma-separated times")
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig.from_dict({})
    raw = dict(cfg.raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.snapshot_times is not None:
        raw["output"] = {**raw.get("output", {}), "snapshot_times": list(args.snapshot_times)}
    if raw != cfg.raw:
        cfg = RunConfig.from_dict(raw)
    return cfg


def run(command: str, cfg: RunConfig, out: Path) -> RunRecord:
    pipe = Pipeline(cfg, out)
    record = RunRecord(cfg.config_hash, command, _now())
    if command in ("indicial", "all"):
        rep = pipe.indicial()
        record.reports["indicial"] = "indicial.json"
        record.summary["k"] = rep["chart"]["k"]
        record.summary["interval"] = rep["interval"]
        _print_indicial(rep)
    if command in ("basis", "all"):
        rep = pipe.basis()
        record.reports["basis"] = "basis.json"
        record.summary["basis_dimension"] = sum(s["dimension"] for s in rep["spaces"])
    if command in ("evolve", "all"):
        validate_parameters(pipe.chart, pipe.params)
        _, report, summary = pipe.evolve()
        record.reports.update(fit="fit.json", summary="summary.json")
        record.summary.update(fit_passed=summary["fit_passed"],
                              stationarity=summary["stationarity"])
        _print_fit(report)
    if command == "fit":
        report = pipe.fit(pipe.load_trajectory())
        record.reports["fit"] = "fit.json"
        record.summary["fit_passed"] = report.passed
        _print_fit(report)
    if command in ("norms", "all"):
        rep = pipe.norms()
        record.reports["norms"] = "norms.csv"
        record.summary["norms_agreement"] = rep["agreement"]
        print(f"membership: {rep['decided']} decided of {rep['rows']}, agreement {rep['agreement']:.0%}")
    record.finished = _now()
    write_json(pipe.path("run_record.json"), record.to_dict())
    return record


def _print_indicial(rep: dict) -> None:
    print(f"{'j':>3} {'lambda':>12} {'q_minus':>12} {'q_plus':>12}")
    for root in rep["chart"]["roots"]:
        print(f"{root['j']:>3} {root['lambda']:>12.6g} {root['q_minus']:>12.6g} {root['q_plus']:>12.6g}")
    lo, hi = rep["interval"]
    print(f"k = {rep['chart']['k']}, I_gamma = ({lo:.6g}, {hi:.6g}), gamma = {rep['parameters']['gamma']:.6g}")


def _print_fit(report: FitReport) -> None:
    for row in report.rows:
        mark = "asserted" if row.asserted else "reported"
        print(f"t={row.t:.4g} mode {row.j}: predicted {row.predicted:.6g}, fitted {row.fitted:.6g} ({mark})")


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        cfg = _load(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["parse"]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    out = args.out or Path(cfg.output.directory)
    try:
        run(args.command, cfg, out)
    except ConstraintError as exc:
        print(f"constraint violated: {', '.join(exc.constraints)}: {exc}", file=sys.stderr)
        return EXIT_CODES["constraint"]
    except (IndicialError, GreenError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["constraint"]
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_CODES["solver"]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["parse"]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    except ConeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["solver"]
    return EXIT_CODES["ok"]
