"""Run configuration: a nested JSON document validated into module inputs.

Top-level blocks are ``cone``, ``parameters``, ``solver``, ``experiment``,
``output`` and ``seed``. Every block rejects unknown keys.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import ConeGeometry, CrossSection, WarpData
from .indicial import IndicialChart, ParameterSet, midpoint_gamma
from .solver import OUTER_BCS, TIP_CLOSURES, SolverConfig
from .spectrum import SpectrumTable, spectrum_analytic

__all__ = [
    "ConeBlock",
    "ParameterBlock",
    "SolverBlock",
    "ExperimentBlock",
    "OutputBlock",
    "RunConfig",
    "load_config",
    "parse_number",
]

INITIAL_KINDS = ("flat-bump", "harmonic-seed", "constant")
FORCING_KINDS = ("none", "constant")


def parse_number(value, what: str):
    """Numbers, or strings such as ``"13/10"`` parsed exactly."""
    if isinstance(value, bool):
        raise ConfigError(f"{what}: expected a number, got a boolean")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{what}: expected a number, got {value!r}")


def _take(block, allowed: dict, where: str) -> dict:
    """Merge ``block`` over the defaults in ``allowed``, rejecting unknown keys."""
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return {**allowed, **block}


@dataclass(frozen=True)
class ConeBlock:
    kind: str = "circle"
    rho: object = Fraction(13, 10)
    n: int | None = None
    components: int = 1
    J_max: int = 6
    warp: dict | None = None

    @classmethod
    def parse(cls, block) -> "ConeBlock":
        d = _take(block, {"kind": "circle", "rho": "13/10", "n": None, "components": 1,
                          "J_max": 6, "warp": None}, "cone")
        if d["kind"] not in ("circle", "sphere"):
            raise ConfigError("cone.kind must be 'circle' or 'sphere'")
        rho = parse_number(d["rho"], "cone.rho") if d["kind"] == "circle" else None
        if rho is not None and not rho > 0:
            raise ConfigError("cone.rho must be positive")
        n = d["n"]
        if d["kind"] == "sphere" and (not isinstance(n, int) or n < 2):
            raise ConfigError("cone.n must be an integer >= 2 for spheres")
        for key in ("components", "J_max"):
            if not isinstance(d[key], int) or d[key] < 1:
                raise ConfigError(f"cone.{key} must be a positive integer")
        warp = d["warp"]
        if warp is not None:
            warp = _take(warp, {"hprime": None, "delta_prime": None, "synthetic": None}, "cone.warp")
        return cls(d["kind"], rho, n, d["components"], d["J_max"], warp)

    def cross_section(self) -> CrossSection:
        if self.kind == "circle":
            return CrossSection.circle(self.rho, components=self.components)
        return CrossSection.sphere(self.n)

    def table(self, J_max: int | None = None) -> SpectrumTable:
        return spectrum_analytic(self.cross_section(), J_max or self.J_max)

    def warp_data(self, table: SpectrumTable) -> WarpData | None:
        """Explicit warp arrays, or synthetic data seeded by ``warp.synthetic``."""
        if self.warp is None:
            return None
        K = table.size
        if self.warp.get("synthetic") is not None:
            rng = np.random.default_rng(int(self.warp["synthetic"]))
            hp = rng.normal(size=K)
            dp = rng.normal(size=(K, K))
            dp[:, table.columns_of(0)] = 0.0
            warp = WarpData(hp, dp)
        else:
            if self.warp.get("hprime") is None or self.warp.get("delta_prime") is None:
                raise ConfigError("cone.warp needs hprime and delta_prime, or synthetic")
            try:
                warp = WarpData(np.asarray(self.warp["hprime"], float),
                                np.asarray(self.warp["delta_prime"], float))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"cone.warp: {exc}") from exc
            if warp.hprime.shape != (K,) or warp.delta_prime.shape != (K, K):
                raise ConfigError(f"cone.warp arrays must have sizes {K} and {K}x{K}")
        warp.check(table)
        return warp

    def geometry(self) -> ConeGeometry:
        # the solver runs on the straight cone; warp data only feeds the basis report
        return ConeGeometry(self.cross_section())


@dataclass(frozen=True)
class ParameterBlock:
    gamma: object = "auto-midpoint"
    p: object = 8
    q: object = 8
    s: object = 1
    epsilon: object = 0.01

    @classmethod
    def parse(cls, block) -> "ParameterBlock":
        d = _take(block, asdict(cls()), "parameters")
        gamma = d["gamma"]
        if gamma != "auto-midpoint":
            gamma = parse_number(gamma, "parameters.gamma")
        vals = {k: parse_number(d[k], f"parameters.{k}") for k in ("p", "q", "s", "epsilon")}
        if not (vals["p"] > 1 and vals["q"] > 1):
            raise ConfigError("parameters.p and parameters.q must exceed 1")
        if not vals["epsilon"] > 0:
            raise ConfigError("parameters.epsilon must be positive")
        return cls(gamma, **vals)

    def resolve(self, chart: IndicialChart) -> ParameterSet:
        gamma = midpoint_gamma(chart) if self.gamma == "auto-midpoint" else self.gamma
        return ParameterSet(gamma, self.p, self.q, self.s, self.epsilon)


@dataclass(frozen=True)
class SolverBlock:
    x_min: float = 1e-4
    n_r: int = 400
    n_modes: int = 6
    t_end: float = 0.05
    dt: float | None = None
    outer_bc: str = "dirichlet-hold"
    tip_closure: str = "regularity"
    picard_sweeps: int = 2
    max_halvings: int = 10

    @classmethod
    def parse(cls, block) -> "SolverBlock":
        d = _take(block, asdict(cls()), "solver")
        if d["outer_bc"] not in OUTER_BCS:
            raise ConfigError(f"solver.outer_bc must be one of {OUTER_BCS}")
        if d["tip_closure"] not in TIP_CLOSURES:
            raise ConfigError(f"solver.tip_closure must be one of {TIP_CLOSURES}")
        for key in ("n_r", "n_modes", "picard_sweeps", "max_halvings"):
            if not isinstance(d[key], int) or isinstance(d[key], bool) or d[key] < 0:
                raise ConfigError(f"solver.{key} must be a non-negative integer")
        for key in ("x_min", "t_end"):
            d[key] = float(parse_number(d[key], f"solver.{key}"))
        if d["dt"] is not None:
            d["dt"] = float(parse_number(d["dt"], "solver.dt"))
        return cls(**d)


@dataclass(frozen=True)
class ExperimentBlock:
    m: float = 2.0
    initial: dict = field(default_factory=lambda: {"kind": "flat-bump", "c0": 1.0,
                                                   "modes": {"1": 0.5, "2": 0.3}})
    forcing: dict = field(default_factory=lambda: {"kind": "none"})
    fit: dict = field(default_factory=dict)
    norms: dict = field(default_factory=dict)
    stationary_tol: float = 1e-4

    @classmethod
    def parse(cls, block) -> "ExperimentBlock":
        d = _take(block, asdict(cls()), "experiment")
        m = float(parse_number(d["m"], "experiment.m"))
        if not m > 0:
            raise ConfigError("experiment.m must be positive")
        kind = (d["initial"] or {}).get("kind", "flat-bump")
        if kind not in INITIAL_KINDS:
            raise ConfigError(f"experiment.initial.kind must be one of {INITIAL_KINDS}")
        defaults = {
            "flat-bump": {"kind": kind, "c0": 1.0, "modes": {"1": 0.5, "2": 0.3},
                          "inner": 0.4, "outer": 0.9},
            "harmonic-seed": {"kind": kind, "c": 1.0, "delta": 0.2, "j": 1, "column": 0},
            "constant": {"kind": kind, "c0": 1.0},
        }[kind]
        initial = _take(d["initial"], defaults, "experiment.initial")
        if kind == "flat-bump":
            try:
                initial["modes"] = {int(j): float(a) for j, a in dict(initial["modes"]).items()}
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"experiment.initial.modes: {exc}") from exc
        forcing = _take(d["forcing"], {"kind": "none", "value": 0.0}, "experiment.forcing")
        if forcing["kind"] not in FORCING_KINDS:
            raise ConfigError(f"experiment.forcing.kind must be one of {FORCING_KINDS}")
        fit = _take(d["fit"], {"window": None, "tolerances": None, "modes": None}, "experiment.fit")
        norms = _take(d["norms"], {"terms": None, "sigma": None, "p": 2, "s": 0, "count": 20},
                      "experiment.norms")
        return cls(m, initial, forcing, fit, norms, float(d["stationary_tol"]))

    def forcing_callable(self):
        if self.forcing["kind"] == "none":
            return None
        g = float(self.forcing["value"])
        return lambda t, x, nodes, V: np.full_like(V, g)


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "run"
    snapshot_times: tuple = (0.02, 0.05)
    formats: tuple = ("json", "csv", "npz")

    @classmethod
    def parse(cls, block) -> "OutputBlock":
        d = _take(block, {"directory": "run", "snapshot_times": [0.02, 0.05],
                          "formats": ["json", "csv", "npz"]}, "output")
        try:
            times = tuple(sorted(float(t) for t in d["snapshot_times"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"output.snapshot_times: {exc}") from exc
        fmts = tuple(d["formats"])
        bad = sorted(set(fmts) - {"json", "csv", "npz"})
        if bad:
            raise ConfigError(f"output.formats: unknown formats {bad}")
        return cls(str(d["directory"]), times, fmts)


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with the raw document kept for hashing."""

    cone: ConeBlock
    parameters: ParameterBlock
    solver: SolverBlock
    experiment: ExperimentBlock
    output: OutputBlock
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, doc) -> "RunConfig":
        d = _take(doc, {"cone": None, "parameters": None, "solver": None, "experiment": None,
                        "output": None, "seed": 0}, "config")
        seed = d["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed must be an integer")
        return cls(ConeBlock.parse(d["cone"]), ParameterBlock.parse(d["parameters"]),
                   SolverBlock.parse(d["solver"]), ExperimentBlock.parse(d["experiment"]),
                   OutputBlock.parse(d["output"]), seed, dict(doc or {}))

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical (sorted-key) JSON of the raw document."""
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def solver_config(self, table: SpectrumTable | None = None,
                      snapshot_times=None) -> SolverConfig:
        s = self.solver
        times = self.output.snapshot_times if snapshot_times is None else snapshot_times
        return SolverConfig(m=self.experiment.m, cone=self.cone.geometry(), x_min=s.x_min,
                            n_r=s.n_r, n_modes=s.n_modes, t_end=s.t_end, dt=s.dt,
                            outer_bc=s.outer_bc, tip_closure=s.tip_closure,
                            forcing=self.experiment.forcing_callable(),
                            picard_sweeps=s.picard_sweeps, max_halvings=s.max_halvings,
                            snapshot_times=tuple(times), table=table)


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file.

    Raises
    ------
    ConfigError
        On malformed JSON or invalid content.
    OSError
        When the file cannot be read.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(doc)
