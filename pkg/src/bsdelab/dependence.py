"""Continuous-dependence experiments on lattice BSDE solutions.

The central quantity is the lattice version of E[sup_t |y1_t - y2_t|^2]: the
expectation over walk paths of the largest squared gap along the path.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .drivers import Driver, DriverFamily, as_terminal
from .lattice import MAX_ENUM_N, LatticeModel, path_levels, sample_paths
from .solver import (
    SolutionField,
    SolverError,
    extremal_solution,
    scheme_error_estimate,
    solve_lipschitz,
)

__all__ = [
    "DependenceReport",
    "sup_distance",
    "classify",
    "xi_dependence_curve",
    "lambda_dependence_curve",
    "uniqueness_gap",
    "apriori_check",
    "counterexample_oracle",
    "counterexample_curve",
    "ode_solution",
    "default_index",
    "SELECTORS",
]

log = logging.getLogger(__name__)

SELECTORS = ("min", "max")
_PATH_CHUNK = 1 << 16


@dataclass
class DependenceReport:
    """Perturbation sizes, measured distances and a convergence verdict.

    ``verdict`` is ``"converges"``, ``"diverges-to: <value>"`` or
    ``"inconclusive"``; ``limit`` holds the plateau value of a divergence.
    """

    labels: list
    perturbations: list
    distances: list
    verdict: str
    limit: Optional[float] = None
    ratios: Optional[list] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.labels) == len(self.perturbations) == len(self.distances)):
            raise ValueError("every label needs one perturbation and one distance")
        if any(d < 0 for d in self.distances):
            raise ValueError("distances must be nonnegative")

    @property
    def converges(self) -> bool:
        return self.verdict == "converges"

    @property
    def diverges(self) -> bool:
        return self.verdict.startswith("diverges-to")

    def to_json(self) -> dict:
        return {
            "perturbations": [float(p) for p in self.perturbations],
            "distances": [float(d) for d in self.distances],
            "verdict": self.verdict,
            "ratios": [None if r is None else float(r) for r in (self.ratios or [])],
        }

    def rows(self):
        ratios = self.ratios or [None] * len(self.distances)
        for label, p, d, r in zip(self.labels, self.perturbations, self.distances, ratios):
            yield {"label": label, "perturbation": p, "distance": d,
                   "ratio": "" if r is None else r}


# --------------------------------------------------------------------------
# metric


def _diff_steps(f: SolutionField, g: SolutionField):
    if f.model != g.model:
        raise ValueError(f"solutions live on different lattices: {f.model} vs {g.model}")
    return [a - b for a, b in zip(f.y.values, g.y.values)]


def sup_distance(f: SolutionField, g: SolutionField, max_enum_n: int = MAX_ENUM_N,
                 n_samples: int = 100_000, seed: int = 0) -> float:
    """E[max_k |y_f(k) - y_g(k)|^2] over lattice paths.

    Exact enumeration when N <= ``max_enum_n``, otherwise the average over
    ``n_samples`` uniformly sampled paths drawn with ``seed``.  Fields constant on
    every time slice skip path work entirely.
    """
    diffs = _diff_steps(f, g)
    if all(np.ptp(d) == 0.0 for d in diffs):
        return float(max(d[0] ** 2 for d in diffs))
    model = f.model
    sq = [d**2 for d in diffs]
    ks = np.arange(model.N + 1)

    def path_max(levels):
        vals = np.empty(levels.shape)
        for k in ks:
            vals[:, k] = sq[k][levels[:, k]]
        return vals.max(axis=1)

    if model.N <= max_enum_n:
        total = 0.0
        n_paths = 2**model.N
        for start in range(0, n_paths, _PATH_CHUNK):
            total += float(path_max(path_levels(model, max_enum_n, start,
                                                start + _PATH_CHUNK)).sum())
        return total / n_paths
    return float(path_max(sample_paths(model, n_samples, seed)).mean())


def classify(distances: Sequence[float], threshold: float = 1e-2,
             scheme_error: float = 0.0, plateau_tol: float = 0.05):
    """Verdict for a distance sequence ordered by shrinking perturbation.

    ``converges``: last < first and last < ``threshold``.
    ``diverges-to``: the last three agree within ``plateau_tol`` (relative) and
    sit above 10x ``scheme_error``.  Anything else is ``inconclusive``.
    """
    d = [float(x) for x in distances]
    if len(d) >= 2 and d[-1] < d[0] and d[-1] < threshold:
        return "converges", None
    if len(d) >= 3:
        tail = d[-3:]
        lo, hi = min(tail), max(tail)
        if lo > 10.0 * scheme_error and lo > 0 and hi / lo - 1.0 <= plateau_tol:
            return f"diverges-to: {d[-1]:.6g}", d[-1]
    return "inconclusive", None


# --------------------------------------------------------------------------
# solving helpers


def default_index(model: LatticeModel, A: float) -> float:
    """Largest index of the default schedule, 8(A + 1), capped by m dt <= 1/2."""
    m = min(8.0 * (A + 1.0), 0.5 / model.dt)
    if not m > A:
        raise SolverError(
            f"lattice too coarse: need m > A={A} with m*dt <= 1/2 (dt={model.dt:g})"
        )
    return m


def _solve_selected(model, driver, xi, selector, m, scheme, h, exploit_lipschitz=True):
    if selector not in SELECTORS:
        raise ValueError(f"selector must be one of {SELECTORS}, got {selector!r}")
    kind = "lower" if selector == "min" else "upper"
    return extremal_solution(model, driver, xi, [m], kind, scheme, h,
                             exploit_lipschitz=exploit_lipschitz)[-1]


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _terminal_gap(model, xi1, xi2) -> float:
    wT = model.w(model.N)
    return model.expectation((as_terminal(xi1)(wT) - as_terminal(xi2)(wT)) ** 2)


# --------------------------------------------------------------------------
# experiments


def xi_dependence_curve(model: LatticeModel, driver: Driver, xi, xi_seq, selector="min",
                        m=None, scheme="explicit", h=None, threshold=1e-2,
                        max_enum_n=MAX_ENUM_N, n_samples=100_000, seed=0, labels=None,
                        n_jobs=1) -> DependenceReport:
    """Distances between the selected extremal solutions for each xi_n and for xi.

    Every problem is solved at the same envelope index ``m`` (default
    ``default_index``), so the points of the curve are comparable.
    """
    m = default_index(model, driver.A) if m is None else float(m)
    base = _solve_selected(model, driver, xi, selector, m, scheme, h)
    sols = _map(lambda x: _solve_selected(model, driver, x, selector, m, scheme, h),
                list(xi_seq), n_jobs)
    perts = [_terminal_gap(model, x, xi) for x in xi_seq]
    dists = [sup_distance(s, base, max_enum_n, n_samples, seed) for s in sols]
    err = scheme_error_estimate(base)
    verdict, limit = classify(dists, threshold, err)
    ratios = [d / p if p > 0 else None for d, p in zip(dists, perts)]
    labels = labels or [as_terminal(x).source for x in xi_seq]
    return DependenceReport(list(labels), perts, dists, verdict, limit, ratios,
                            {"m": m, "selector": selector, "scheme_error": err,
                             "base_y0": base.y0, "y0": [s.y0 for s in sols]})


def _driver_gap_integral(model, g_lam, g_0, base: SolutionField) -> float:
    """sum_k dt E[|g_lam(t_k, y_k, z_k) - g_0(t_k, y_k, z_k)|^2] along ``base``."""
    total = 0.0
    for k in range(model.N):
        t = float(model.times[k])
        yk, zk = base.y[k], base.z[k]
        gap = np.asarray(g_lam(t, yk, zk), dtype=float) - np.asarray(g_0(t, yk, zk), dtype=float)
        total += model.dt * model.expectation(gap**2, k)
    return total


def lambda_dependence_curve(model: LatticeModel, family: DriverFamily,
                            xi_family: Callable, lam_seq, selector="min", m=None,
                            scheme="explicit", h=None, threshold=1e-2,
                            max_enum_n=MAX_ENUM_N, n_samples=100_000, seed=0,
                            n_jobs=1) -> DependenceReport:
    """Joint perturbation of driver slice and terminal value as lam -> lam0.

    ``extra["rhs"]`` holds E|xi^lam - xi^lam0|^2 plus the lattice quadrature of
    E int |g^lam - g^lam0|^2 along the base solution; ``ratios`` are
    distance / rhs for Lipschitz families (None otherwise).
    """
    lam_seq = [float(x) for x in lam_seq]
    bad = [x for x in lam_seq if not family.contains(x)]
    if bad:
        raise ValueError(f"lam values {bad} outside domain {family.domain}")
    m = default_index(model, family.A) if m is None else float(m)
    lam0 = family.lam0
    g0 = family.slice(lam0)
    xi0 = xi_family(lam0)
    base = _solve_selected(model, g0, xi0, selector, m, scheme, h)

    def solve(lam):
        return _solve_selected(model, family.slice(lam), xi_family(lam), selector, m,
                               scheme, h)

    sols = _map(solve, lam_seq, n_jobs)
    dists = [sup_distance(s, base, max_enum_n, n_samples, seed) for s in sols]
    xi_gaps = [_terminal_gap(model, xi_family(lam), xi0) for lam in lam_seq]
    g_gaps = [_driver_gap_integral(model, family.slice(lam), g0, base) for lam in lam_seq]
    rhs = [a + b for a, b in zip(xi_gaps, g_gaps)]
    ratios = None
    if family.lipschitz is not None:
        ratios = [d / r if r > 0 else None for d, r in zip(dists, rhs)]
    err = scheme_error_estimate(base)
    verdict, limit = classify(dists, threshold, err)
    extra = {"m": m, "selector": selector, "scheme_error": err, "rhs": rhs,
             "xi_gaps": xi_gaps, "driver_gaps": g_gaps}
    if ratios:
        valid = [r for r in ratios if r is not None]
        extra["fitted_C"] = max(valid) if valid else None
    return DependenceReport([f"lam={lam!r}" for lam in lam_seq],
                            [abs(lam - lam0) for lam in lam_seq], dists, verdict, limit,
                            ratios, extra)


def uniqueness_gap(model: LatticeModel, driver: Driver, xi, m_max: float,
                   scheme="explicit", h=None, max_enum_n=MAX_ENUM_N, n_samples=100_000,
                   seed=0, exploit_lipschitz=True, return_solutions=False):
    """Sup-distance between the lower- and upper-envelope solutions at index ``m_max``.

    Values well above the scheme error witness non-uniqueness; values at the
    scheme-error scale are merely consistent with uniqueness.
    """
    if m_max * model.dt > 0.5:
        raise SolverError(f"m_max*dt = {m_max * model.dt:g} > 0.5")
    lo = extremal_solution(model, driver, xi, [m_max], "lower", scheme, h,
                           exploit_lipschitz=exploit_lipschitz)[-1]
    hi = extremal_solution(model, driver, xi, [m_max], "upper", scheme, h,
                           exploit_lipschitz=exploit_lipschitz)[-1]
    gap = sup_distance(lo, hi, max_enum_n, n_samples, seed)
    if return_solutions:
        return gap, lo, hi
    return gap


def apriori_check(model: LatticeModel, driver: Driver, xi_pairs, scheme="explicit",
                  max_enum_n=MAX_ENUM_N, n_samples=100_000, seed=0):
    """Ratios sup_distance(y1, y2) / E|xi1 - xi2|^2 for each terminal pair.

    Pairs with identical terminal values give an undefined ratio; they are
    reported as None with a warning.
    """
    ratios = []
    for i, (xi1, xi2) in enumerate(xi_pairs):
        denom = _terminal_gap(model, xi1, xi2)
        if denom == 0.0:
            warnings.warn(f"pair {i}: identical terminal values, ratio undefined; skipped",
                          stacklevel=2)
            ratios.append(None)
            continue
        y1 = solve_lipschitz(model, driver, xi1, scheme)
        y2 = solve_lipschitz(model, driver, xi2, scheme)
        ratios.append(sup_distance(y1, y2, max_enum_n, n_samples, seed) / denom)
    return ratios


# --------------------------------------------------------------------------
# the 3|y|^{2/3} counterexample


def counterexample_oracle(T: float, n: int, t):
    """Closed forms for g = 3|y|^{2/3}: ((T - t + n^{-1/3})^3, 0, (T - t)^3).

    The first entry solves the problem with terminal value 1/n; the other two
    are the minimal and maximal solutions for terminal value 0.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise ValueError(f"t must lie in [0, {T}]")
    tau = T - t_arr
    y_n = (tau + n ** (-1.0 / 3.0)) ** 3
    y_max = tau**3
    y_min = np.zeros_like(tau)
    if t_arr.ndim == 0:
        return float(y_n), float(y_min), float(y_max)
    return y_n, y_min, y_max


def counterexample_curve(T: float, ns, method: str = "ode", n_times: int = 1025,
                         threshold: float = 1e-2):
    """Distances of the solution for terminal value 1/n to the extremal solutions for 0.

    Returns ``(report_to_min, report_to_max)``.  ``method="ode"`` integrates the
    perturbed problems numerically (each has a unique solution since 1/n > 0);
    ``method="oracle"`` uses the closed form.  The extremal solutions for
    terminal value 0 come from the closed form, except that with ``"ode"`` the
    minimal one is also integrated.  No lattice is involved: the process is
    deterministic, so only the time grid's resolution of the sup remains.
    """
    if method not in ("ode", "oracle"):
        raise ValueError(f"method must be 'ode' or 'oracle', got {method!r}")
    from .drivers import catalog_lookup

    g = catalog_lookup("remark33")
    times = np.linspace(0.0, T, n_times)
    _, y_min, y_max = counterexample_oracle(T, 1, times)
    if method == "ode":
        y_min = ode_solution(g, 0.0, T, times)
    to_min, to_max = [], []
    for n in ns:
        if method == "ode":
            y_n = ode_solution(g, 1.0 / n, T, times)
        else:
            y_n = counterexample_oracle(T, n, times)[0]
        to_min.append(float(np.max((y_n - y_min) ** 2)))
        to_max.append(float(np.max((y_n - y_max) ** 2)))
    perts = [1.0 / n**2 for n in ns]
    labels = [f"n={n}" for n in ns]
    reports = []
    for dists, target in ((to_min, "min"), (to_max, "max")):
        verdict, limit = classify(dists, threshold)
        reports.append(DependenceReport(labels, perts, dists, verdict, limit,
                                        [d / p for d, p in zip(dists, perts)],
                                        {"base": target, "T": T, "method": method,
                                         "limit_theory": T**6 if target == "min" else 0.0}))
    return tuple(reports)


def ode_solution(driver: Driver, xi: float, T: float, times, rtol=1e-10, atol=1e-12):
    """y on ``times`` for y' = -g(t, y, 0), y(T) = xi (the z-free, constant-xi case).

    This is an independent check of the lattice solver when the BSDE reduces
    to an ODE.  Solved backward with scipy's RK45 integrator.
    """
    if driver.depends_on_z:
        raise ValueError("ODE reduction needs a driver that does not depend on z")
    times = np.asarray(times, dtype=float)

    def rhs(t, y):
        return [-float(driver(t, y[0], 0.0))]

    sol = solve_ivp(rhs, (T, float(times.min())), [float(xi)], dense_output=True,
                    rtol=rtol, atol=atol, method="RK45")
    if not sol.success:
        raise SolverError(f"ODE integration failed: {sol.message}")
    return sol.sol(times)[0]

