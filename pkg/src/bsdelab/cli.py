"""Command-line front end.

Every run writes its data files plus ``run_record.json`` (config echo,
version, wall time, manifest) into the output directory.  Exit status is 0 on
success, 2 on configuration errors and 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    COMMANDS,
    ConfigError,
    ExperimentConfig,
    default_output_dir,
    effective_solution,
    load_config,
    resolve_driver,
    resolve_family,
    validate,
)
from .dependence import (
    counterexample_curve,
    lambda_dependence_curve,
    uniqueness_gap,
    xi_dependence_curve,
)
from .dsl import DSLError, parse
from .drivers import TerminalValue, _substitute
from .envelope import EnvelopeDriver, EnvelopeError
from .lattice import LatticeError, build
from .solver import (
    SolverError,
    default_lattice_size,
    default_m_schedule,
    extremal_solution,
    picard_iterate,
    scheme_error_estimate,
    solve_lipschitz,
)

log = logging.getLogger("bsdelab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_MODULE_ERRORS = (
    (SolverError, "solver"),
    (EnvelopeError, "envelope"),
    (LatticeError, "lattice"),
    (DSLError, "driver-dsl"),
)


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _model(cfg, A_for_schedule=None):
    N = cfg.N
    if N is None:
        ms = cfg.m_schedule or (default_m_schedule(A_for_schedule)
                                if A_for_schedule is not None else [0.5])
        N = default_lattice_size(cfg.T, max(ms))
    return build(cfg.T, N)


def _xi_family(cfg):
    src = cfg.xi_family or cfg.terminal
    expr = parse(src)

    def xi(lam):
        return TerminalValue(_substitute(expr, "lam", float(lam)))
    return xi


# --------------------------------------------------------------------------
# commands


def cmd_solve(cfg, out):
    driver = resolve_driver(cfg)
    method = effective_solution(cfg, driver)
    if method in ("minimal", "maximal"):
        model = _model(cfg, driver.A)
        ms = cfg.m_schedule or default_m_schedule(driver.A)
        kind = "lower" if method == "minimal" else "upper"
        sol = extremal_solution(model, driver, cfg.terminal, ms, kind, cfg.scheme, cfg.h)[-1]
    else:
        model = build(cfg.T, cfg.N if cfg.N is not None
                      else default_lattice_size(cfg.T, driver.lipschitz))
        if method == "picard":
            sol = picard_iterate(model, driver, cfg.terminal, cfg.iters)
        else:
            sol = solve_lipschitz(model, driver, cfg.terminal, cfg.scheme)
    err = scheme_error_estimate(sol) if method != "picard" else sol.meta["sup_gap"]
    files = [_write_csv(out / "solve.csv", ["t", "y_root", "min_y", "max_y"], sol.root_path())]
    summary = sol.summary()
    summary.update({"solution": method, "scheme_error_estimate": err})
    files.append(_write_json(out / "summary.json", summary))
    return files, err


def cmd_envelope(cfg, out):
    driver = resolve_driver(cfg)
    ms = cfg.m_schedule or default_m_schedule(driver.A)
    h = cfg.h if cfg.h is not None else 1e-3
    n = int(round((cfg.y_max - cfg.y_min) / cfg.y_step))
    ys = cfg.y_min + cfg.y_step * np.arange(n + 1)
    rows = []
    for kind in cfg.kinds:
        for m in ms:
            env = EnvelopeDriver(driver, m, kind, h, exploit_lipschitz=False)
            for z in cfg.z_values:
                for y in ys:
                    rows.append((kind, float(m), cfg.t, float(y), float(z),
                                 env.point(cfg.t, float(y), float(z))))
    files = [_write_csv(out / "envelope.csv", ["kind", "m", "t", "y", "z", "value"], rows)]
    return files, None


def _write_report(out, stem, report):
    files = [_write_json(out / f"{stem}.json", report.to_json())]
    files.append(_write_csv(out / f"{stem}.csv", ["label", "perturbation", "distance", "ratio"],
                            ([r["label"], r["perturbation"], r["distance"], r["ratio"]]
                             for r in report.rows())))
    return files


def cmd_dependence(cfg, out):
    if cfg.family:
        family = resolve_family(cfg)
        model = _model(cfg, family.A)
        m = max(cfg.m_schedule) if cfg.m_schedule else None
        report = lambda_dependence_curve(model, family, _xi_family(cfg), cfg.lams,
                                         cfg.selector, m, cfg.scheme, cfg.h, cfg.threshold,
                                         cfg.max_enum_n, cfg.sample_count, cfg.seed)
    else:
        driver = resolve_driver(cfg)
        model = _model(cfg, driver.A)
        m = max(cfg.m_schedule) if cfg.m_schedule else None
        report = xi_dependence_curve(model, driver, cfg.terminal, cfg.perturbations,
                                     cfg.selector, m, cfg.scheme, cfg.h, cfg.threshold,
                                     cfg.max_enum_n, cfg.sample_count, cfg.seed)
    return _write_report(out, "dependence", report), report.extra.get("scheme_error")


def cmd_counterexample(cfg, out):
    to_min, to_max = counterexample_curve(cfg.T, cfg.ns, cfg.counterexample_method,
                                          threshold=cfg.threshold)
    rows = [(n, p, a, b) for n, p, a, b in
            zip(cfg.ns, to_min.perturbations, to_min.distances, to_max.distances)]
    files = [_write_csv(out / "counterexample.csv",
                        ["n", "perturbation", "distance_to_min", "distance_to_max"], rows)]
    files.append(_write_json(out / "counterexample_min.json", to_min.to_json()))
    files.append(_write_json(out / "counterexample_max.json", to_max.to_json()))
    return files, None


def cmd_uniqueness(cfg, out):
    driver = resolve_driver(cfg)
    model = _model(cfg, driver.A)
    m_max = max(cfg.m_schedule or default_m_schedule(driver.A))
    gap, lo, hi = uniqueness_gap(model, driver, cfg.terminal, m_max, cfg.scheme, cfg.h,
                                 cfg.max_enum_n, cfg.sample_count, cfg.seed,
                                 return_solutions=True)
    err = max(scheme_error_estimate(lo), scheme_error_estimate(hi))
    files = [_write_json(out / "uniqueness.json", {
        "driver": driver.name, "terminal": cfg.terminal, "T": cfg.T, "N": model.N,
        "m": m_max, "gap": gap, "y0_min": lo.y0, "y0_max": hi.y0,
        "scheme_error_estimate": err,
    })]
    return files, err


COMMAND_FUNCS = {
    "solve": cmd_solve,
    "envelope": cmd_envelope,
    "dependence": cmd_dependence,
    "counterexample": cmd_counterexample,
    "uniqueness": cmd_uniqueness,
}


def run(cfg: ExperimentConfig) -> dict:
    """Run one validated experiment and write its run record.

    Raises ConfigError on invalid configs; lower-module errors propagate.
    """
    diags = validate(cfg)
    if diags:
        raise ConfigError(diags)
    out = Path(cfg.output or default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files, err = COMMAND_FUNCS[cfg.command](cfg, out)
    record = {
        "config": cfg.to_json(),
        "version": __version__,
        "wall_time_s": time.perf_counter() - start,
        "manifest": [{"file": p.name, "bytes": p.stat().st_size} for p in files],
        "scheme_error_estimate": err,
    }
    _write_json(out / "run_record.json", record)
    return record


# --------------------------------------------------------------------------
# argument parsing


def _csv_floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or key = value config file")
    common.add_argument("--driver", help="catalog entry, e.g. remark33 or linear(a=1,b=0), "
                        "or DSL source (needs --A)")
    common.add_argument("--A", dest="driver_A", type=float, help="growth constant of a DSL driver")
    common.add_argument("--K", dest="driver_K", type=float,
                        help="Lipschitz constant of a DSL driver")
    common.add_argument("--terminal", help="terminal value: DSL source in w, or a constant")
    common.add_argument("--T", type=float, help="horizon")
    common.add_argument("--N", type=int, help="number of lattice steps")
    common.add_argument("--m", dest="m_schedule", type=_csv_floats,
                        help="envelope index or comma-separated schedule")
    common.add_argument("--scheme", choices=["explicit", "implicit"])
    common.add_argument("--h", type=float, help="envelope grid step (default dt)")
    common.add_argument("--solution", choices=["lipschitz", "picard", "minimal", "maximal"])
    common.add_argument("--selector", choices=["min", "max"])
    common.add_argument("--perturb", dest="perturbations", action="append",
                        help="perturbed terminal value (repeatable)")
    common.add_argument("--family", help="driver family (catalog name or DSL in lam)")
    common.add_argument("--lam", dest="lams", type=_csv_floats, help="comma-separated lambdas")
    common.add_argument("--lam0", type=float)
    common.add_argument("--xi-family", dest="xi_family", help="terminal value in w and lam")
    common.add_argument("--n", dest="ns", type=lambda s: [int(x) for x in s.split(",")],
                        help="counterexample indices, comma-separated")
    common.add_argument("--method", dest="counterexample_method", choices=["ode", "oracle"])
    common.add_argument("--kinds", type=lambda s: s.split(","))
    common.add_argument("--y-min", dest="y_min", type=float)
    common.add_argument("--y-max", dest="y_max", type=float)
    common.add_argument("--y-step", dest="y_step", type=float)
    common.add_argument("--z", dest="z_values", type=_csv_floats)
    common.add_argument("--max-enum-n", dest="max_enum_n", type=int)
    common.add_argument("--sample-count", dest="sample_count", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--threshold", type=float)
    common.add_argument("--out", dest="output", help="output directory "
                        "(default $BSDELAB_OUT or ./bsdelab-out)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bsdelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


_NON_CONFIG = {"command", "config", "verbose"}


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        data = load_config(args.config).to_json()
    for key, value in vars(args).items():
        if key not in _NON_CONFIG and value is not None:
            data[key] = value
    data["command"] = args.command
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "validate":
            diags = validate(cfg)
            for d in diags:
                print(d)
            return EXIT_CONFIG if diags else EXIT_OK
        record = run(cfg)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        for cls, module in _MODULE_ERRORS:
            if isinstance(exc, cls):
                print(f"{module}: {exc}", file=sys.stderr)
                return EXIT_NUMERIC
        if isinstance(exc, (ArithmeticError, ValueError)):
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        raise
    print(json.dumps({"output": record["manifest"], "wall_time_s": record["wall_time_s"]}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
