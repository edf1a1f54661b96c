"""Experiment configuration files and their validation."""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .dsl import DSLError
from .drivers import CATALOG, CatalogError, DriverFamily, as_driver, catalog_lookup

__all__ = ["ExperimentConfig", "ConfigError", "COMMANDS", "load_config", "validate",
           "OUTPUT_ENV", "default_output_dir"]

COMMANDS = ("solve", "envelope", "dependence", "counterexample", "uniqueness", "validate")
SOLUTIONS = ("lipschitz", "picard", "minimal", "maximal")
OUTPUT_ENV = "BSDELAB_OUT"


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "bsdelab-out")


@dataclass
class ExperimentConfig:
    command: str = "solve"
    driver: str = "zero"
    driver_A: Optional[float] = None
    driver_K: Optional[float] = None
    terminal: str = "0"
    T: float = 1.0
    N: Optional[int] = None
    m_schedule: Optional[list] = None
    scheme: str = "explicit"
    h: Optional[float] = None
    solution: Optional[str] = None
    iters: int = 50
    # dependence
    selector: str = "min"
    perturbations: list = field(default_factory=list)
    family: Optional[str] = None
    lams: list = field(default_factory=list)
    lam0: Optional[float] = None
    xi_family: Optional[str] = None
    threshold: float = 1e-2
    # counterexample
    ns: list = field(default_factory=lambda: [2**i for i in range(11)])
    counterexample_method: str = "ode"
    # envelope grid
    kinds: list = field(default_factory=lambda: ["lower", "upper"])
    t: float = 0.0
    y_min: float = -1.0
    y_max: float = 1.0
    y_step: float = 0.01
    z_values: list = field(default_factory=lambda: [0.0])
    # sampling
    max_enum_n: int = 20
    sample_count: int = 100_000
    seed: int = 0
    output: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        aliases = {"mSchedule": "m_schedule", "sampleCount": "sample_count",
                   "maxEnumN": "max_enum_n", "m": "m_schedule", "out": "output",
                   "lambdas": "lams"}
        clean, unknown = {}, []
        for key, value in data.items():
            key = aliases.get(key, key)
            if key not in known:
                unknown.append(key)
            elif value is not None:
                clean[key] = value
        if unknown:
            raise ConfigError([f"{k}: unknown configuration field" for k in sorted(unknown)])
        cfg = cls(**clean)
        cfg._coerce()
        return cfg

    def _coerce(self):
        diags = []

        def conv(name, fn):
            value = getattr(self, name)
            if value is None:
                return
            try:
                setattr(self, name, fn(value))
            except (TypeError, ValueError):
                diags.append(f"{name}: cannot interpret {value!r}")

        def as_list(fn):
            def inner(v):
                if isinstance(v, str):
                    v = [p for p in (s.strip() for s in v.split(",")) if p]
                elif not isinstance(v, (list, tuple)):
                    v = [v]
                return [fn(x) for x in v]
            return inner

        for name in ("T", "h", "threshold", "t", "y_min", "y_max", "y_step", "driver_A",
                     "driver_K", "lam0"):
            conv(name, float)
        for name in ("N", "iters", "max_enum_n", "sample_count", "seed"):
            conv(name, _as_int)
        conv("m_schedule", as_list(float))
        conv("lams", as_list(float))
        conv("ns", as_list(_as_int))
        conv("z_values", as_list(float))
        conv("kinds", as_list(str))
        if isinstance(self.perturbations, str):
            self.perturbations = [p.strip() for p in self.perturbations.split(";") if p.strip()]
        else:
            self.perturbations = [str(p) for p in self.perturbations]
        self.terminal = str(self.terminal)
        if diags:
            raise ConfigError(diags)

    def to_json(self) -> dict:
        return asdict(self)


def _as_int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(v)
    return int(f)


def load_config(path) -> ExperimentConfig:
    """Read a JSON file, or an INI-style ``key = value`` file (all sections merged)."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config: invalid JSON ({exc})"]) from None
        return ExperimentConfig.from_dict(data)
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (T, N)
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError([f"config: {exc}"]) from None
    data = {}
    for section in parser.sections():
        data.update(parser[section])
    return ExperimentConfig.from_dict(data)


# --------------------------------------------------------------------------
# validation


def resolve_driver(cfg: ExperimentConfig):
    return as_driver(cfg.driver, cfg.driver_A, cfg.driver_K)


def resolve_family(cfg: ExperimentConfig) -> DriverFamily:
    name = cfg.family.strip()
    if name in CATALOG:
        fam = catalog_lookup(name, {} if cfg.lam0 is None else {"lam0": cfg.lam0})
        if not isinstance(fam, DriverFamily):
            raise CatalogError(f"catalog entry {name!r} is a driver, not a family")
        return fam
    if cfg.driver_A is None:
        raise DSLError("DSL driver families need a declared uniform growth constant driver_A")
    lams = list(cfg.lams) + ([cfg.lam0] if cfg.lam0 is not None else [])
    lo, hi = (min(lams), max(lams)) if lams else (0.0, 1.0)
    return DriverFamily(expr=name, domain=(lo, hi), lam0=cfg.lam0 if cfg.lam0 is not None
                        else lo, A=cfg.driver_A, lipschitz=cfg.driver_K)


def effective_solution(cfg: ExperimentConfig, driver) -> str:
    if cfg.solution:
        return cfg.solution
    return "lipschitz" if driver.lipschitz is not None else "minimal"


def _uses_schedule(cfg, driver):
    if cfg.command == "uniqueness":
        return True
    if cfg.command in ("solve", "validate", "dependence") and cfg.m_schedule:
        return True
    return (cfg.command in ("solve", "validate") and driver is not None
            and effective_solution(cfg, driver) in ("minimal", "maximal"))


def validate(cfg: ExperimentConfig) -> list:
    """Diagnostics ``"<field>: <rule>"``; empty iff the run's preconditions hold."""
    from .dsl import parse
    from .drivers import TerminalValue
    from .solver import SCHEMES, default_lattice_size, default_m_schedule

    diags = []
    if cfg.command not in COMMANDS:
        diags.append(f"command: must be one of {', '.join(COMMANDS)}")
    if not cfg.T > 0:
        diags.append(f"T: must be positive, got {cfg.T}")
    if cfg.N is not None and cfg.N < 1:
        diags.append(f"N: must be a positive integer, got {cfg.N}")
    if cfg.h is not None and not cfg.h > 0:
        diags.append(f"h: must be positive, got {cfg.h}")
    if cfg.scheme not in SCHEMES:
        diags.append(f"scheme: must be one of {', '.join(SCHEMES)}")
    if cfg.solution is not None and cfg.solution not in SOLUTIONS:
        diags.append(f"solution: must be one of {', '.join(SOLUTIONS)}")
    if cfg.selector not in ("min", "max"):
        diags.append("selector: must be min or max")
    if cfg.max_enum_n < 1:
        diags.append("maxEnumN: must be positive")
    if cfg.sample_count < 1:
        diags.append("sampleCount: must be positive")
    if cfg.iters < 1:
        diags.append("iters: must be positive")

    driver = None
    if cfg.command not in ("counterexample",) and not (cfg.command == "dependence"
                                                       and cfg.family):
        try:
            driver = resolve_driver(cfg)
        except (DSLError, CatalogError, ValueError) as exc:
            diags.append(f"driver: {exc}")
    if cfg.command != "counterexample":
        try:
            TerminalValue(cfg.terminal)
        except (DSLError, ValueError) as exc:
            diags.append(f"terminal: {exc}")

    A = driver.A if driver is not None else None
    family = None
    if cfg.command == "dependence":
        if cfg.family:
            try:
                family = resolve_family(cfg)
                A = family.A
            except (DSLError, CatalogError, ValueError) as exc:
                diags.append(f"family: {exc}")
            if not cfg.lams:
                diags.append("lams: a lambda sequence is required with a family")
            elif family is not None:
                outside = [x for x in cfg.lams if not family.contains(x)]
                if outside:
                    diags.append(f"lams: values {outside} outside domain {family.domain}")
            if cfg.xi_family:
                try:
                    expr = parse(cfg.xi_family)
                    from .dsl import free_variables
                    extra = free_variables(expr) - {"w", "lam"}
                    if extra:
                        diags.append(f"xi_family: may only use w and lam, found {sorted(extra)}")
                except DSLError as exc:
                    diags.append(f"xi_family: {exc}")
        else:
            if not cfg.perturbations:
                diags.append("perturbations: at least one perturbed terminal value is required")
            for i, src in enumerate(cfg.perturbations):
                try:
                    TerminalValue(src)
                except (DSLError, ValueError) as exc:
                    diags.append(f"perturbations[{i}]: {exc}")

    if cfg.command == "counterexample":
        if not cfg.ns or any(n < 1 for n in cfg.ns):
            diags.append("ns: need a nonempty list of integers >= 1")
        if cfg.counterexample_method not in ("ode", "oracle"):
            diags.append("counterexample_method: must be ode or oracle")

    if cfg.command == "envelope":
        if not cfg.y_step > 0:
            diags.append("y_step: must be positive")
        if cfg.y_max < cfg.y_min:
            diags.append("y_max: must be >= y_min")
        bad = [k for k in cfg.kinds if k not in ("lower", "upper")]
        if bad or not cfg.kinds:
            diags.append("kinds: entries must be lower or upper")
        if driver is not None:
            ms = cfg.m_schedule or default_m_schedule(driver.A)
            for m in ms:
                if not m > driver.A:
                    diags.append(f"m: m = {m:g} must exceed A = {driver.A:g}")

    if _uses_schedule(cfg, driver) and A is not None and cfg.T > 0:
        ms = cfg.m_schedule or default_m_schedule(A)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            diags.append("m: schedule must be strictly increasing")
        for m in ms:
            if not m > A:
                diags.append(f"m: m = {m:g} must exceed A = {A:g}")
        N = cfg.N if cfg.N is not None else default_lattice_size(cfg.T, max(ms))
        if N >= 1:
            ratio = max(ms) * cfg.T / N
            if ratio > 0.5:
                diags.append(f"m: m·dt = {float(ratio)} > 0.5")
    elif (cfg.command in ("solve", "validate") and driver is not None and cfg.N is not None
          and cfg.N >= 1):
        method = effective_solution(cfg, driver)
        if method in ("lipschitz", "picard"):
            if driver.lipschitz is None:
                diags.append(f"solution: {method} needs a driver with a declared Lipschitz "
                             "constant")
            else:
                kdt = driver.lipschitz * cfg.T / cfg.N
                limit = 0.5 if (method == "lipschitz" and cfg.scheme == "explicit") else 1.0
                if kdt > limit or (limit == 1.0 and kdt >= 1.0):
                    diags.append(f"N: K·dt = {kdt:.6g} violates the {cfg.scheme} scheme bound")
    return diags
