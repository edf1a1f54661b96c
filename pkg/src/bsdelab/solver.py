"""Backward induction for y_t = xi + int_t^T g(s, y_s, z_s) ds - int_t^T z_s dW_s.

On the lattice, one step from k+1 to k reads::

    z(k, j) = (y(k+1, j+1) - y(k+1, j)) / (2 sqrt(dt))
    y(k, j) = E[y_{k+1} | (k, j)] + g(t_k, yhat, z(k, j)) dt

with ``yhat = E[y_{k+1} | (k, j)]`` (explicit) or ``yhat = y(k, j)`` (implicit,
solved by fixed-point iteration).  For continuous, non-Lipschitz drivers the
minimal/maximal solutions are approached by solving with the lower/upper
envelopes of the driver for an increasing sequence of indices m.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .drivers import Driver, as_terminal
from .envelope import EnvelopeDriver
from .lattice import AdaptedField, LatticeModel, build, cond_expect, martingale_coeff

__all__ = [
    "SolverError",
    "SolutionField",
    "SCHEMES",
    "solve_lipschitz",
    "picard_iterate",
    "minimal_solution",
    "maximal_solution",
    "extremal_solution",
    "default_m_schedule",
    "default_lattice_size",
    "check_schedule",
    "scheme_error_estimate",
    "BSDESolver",
]

log = logging.getLogger(__name__)

SCHEMES = ("explicit", "implicit")
FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 200


class SolverError(ArithmeticError):
    pass


@dataclass
class SolutionField:
    """Node-indexed (y, z) on a lattice; z lives on steps 0..N-1."""

    y: AdaptedField
    z: AdaptedField
    model: LatticeModel
    driver: object = field(repr=False, default=None)
    terminal: object = field(repr=False, default=None)
    meta: dict = field(default_factory=dict)

    @property
    def y0(self) -> float:
        return self.y[0, 0]

    @property
    def z0(self) -> float:
        return self.z[0, 0]

    def root_path(self):
        """Per step: (t_k, E[y_k] seen from the root, min_j y(k, j), max_j y(k, j))."""
        rows = []
        for k in range(self.model.N + 1):
            v = self.y[k]
            rows.append((float(self.model.times[k]), self.model.expectation(v, k),
                         float(v.min()), float(v.max())))
        return rows

    def summary(self) -> dict:
        return {
            "driver": getattr(self.driver, "name", str(self.driver)),
            "terminal": getattr(self.terminal, "source", str(self.terminal)),
            "scheme": self.meta.get("scheme"),
            "N": self.model.N,
            "T": self.model.T,
            "m": self.meta.get("m"),
            "y0": self.y0,
            "z0": self.z0,
        }


def _terminal_values(model, xi):
    if isinstance(xi, np.ndarray) or isinstance(xi, (list, tuple)):
        vals = np.asarray(xi, dtype=float)
        if vals.shape != (model.N + 1,):
            raise SolverError(f"terminal array needs {model.N + 1} values, got {vals.shape}")
        return vals, None
    term = as_terminal(xi)
    return term(model.w(model.N)), term


def _check_step_condition(K, dt, scheme, what="K"):
    if scheme == "explicit" and K * dt > 0.5:
        raise SolverError(f"{what}*dt = {K * dt:g} > 0.5 violates the explicit scheme condition")
    if scheme == "implicit" and K * dt >= 1.0:
        raise SolverError(f"{what}*dt = {K * dt:g} >= 1 violates the implicit scheme condition")


def _finite(values, k):
    if not np.all(np.isfinite(values)):
        raise SolverError(f"non-finite solution values at step {k}")
    return values


def _backward(model, driver, xi, scheme):
    if scheme not in SCHEMES:
        raise SolverError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    terminal, term = _terminal_values(model, xi)
    N, dt = model.N, model.dt
    y = AdaptedField(model)
    z = AdaptedField(model, N - 1)
    y[N] = terminal
    iterations = 0
    for k in range(N - 1, -1, -1):
        t = float(model.times[k])
        ey = cond_expect(y, k)
        zk = martingale_coeff(y, k)
        z[k] = zk
        if scheme == "explicit":
            yk = ey + np.asarray(driver(t, ey, zk), dtype=float) * dt
        else:
            yk = ey.copy()
            for it in range(FIXED_POINT_MAX_ITER):
                nxt = ey + np.asarray(driver(t, yk, zk), dtype=float) * dt
                delta = np.max(np.abs(nxt - yk))
                yk = nxt
                if delta <= FIXED_POINT_TOL:
                    break
            else:
                raise SolverError(
                    f"implicit fixed point did not converge in {FIXED_POINT_MAX_ITER} "
                    f"iterations at step {k} (last change {delta:g})"
                )
            iterations = max(iterations, it + 1)
        y[k] = _finite(yk, k)
    meta = {"scheme": scheme}
    if scheme == "implicit":
        meta["max_fixed_point_iterations"] = iterations
    return SolutionField(y, z, model, driver, term if term is not None else xi, meta)


def solve_lipschitz(model: LatticeModel, driver, xi, scheme: str = "explicit") -> SolutionField:
    """Backward induction for a driver with declared Lipschitz constant K.

    Requires ``K * dt <= 1/2`` (explicit) or ``K * dt < 1`` (implicit).
    """
    K = getattr(driver, "lipschitz", None)
    if K is None:
        raise SolverError(f"driver {getattr(driver, 'name', driver)!r} declares no Lipschitz "
                          "constant; use minimal_solution/maximal_solution")
    _check_step_condition(K, model.dt, scheme)
    return _backward(model, driver, xi, scheme)


def picard_iterate(model: LatticeModel, driver, xi, iters: int = 50,
                   tol: float = 0.0) -> SolutionField:
    """Successive substitution: freeze (y, z) in the driver, solve the linear recursion.

    Starts from (y, z) = (0, 0).  The returned field carries ``meta["gaps"]``,
    the sup-norm change of y per sweep, and ``meta["sup_gap"]``, the last one.
    Stops early once a sweep changes y by at most ``tol``.
    """
    K = getattr(driver, "lipschitz", None)
    if K is None:
        raise SolverError("Picard iteration needs a driver with a declared Lipschitz constant")
    _check_step_condition(K, model.dt, "implicit")
    terminal, term = _terminal_values(model, xi)
    N, dt = model.N, model.dt
    y_prev = AdaptedField.from_function(model, lambda t, w: 0.0)
    z_prev = AdaptedField.from_function(model, lambda t, w: 0.0, horizon=N - 1)
    gaps = []
    for _ in range(iters):
        y = AdaptedField(model)
        z = AdaptedField(model, N - 1)
        y[N] = terminal
        for k in range(N - 1, -1, -1):
            t = float(model.times[k])
            gk = np.asarray(driver(t, y_prev[k], z_prev[k]), dtype=float)
            y[k] = _finite(cond_expect(y, k) + gk * dt, k)
            z[k] = martingale_coeff(y, k)
        gap = max(float(np.max(np.abs(a - b))) for a, b in zip(y.values, y_prev.values))
        gaps.append(gap)
        y_prev, z_prev = y, z
        if gap <= tol:
            break
    meta = {"scheme": "picard", "gaps": gaps, "sup_gap": gaps[-1], "iterations": len(gaps)}
    return SolutionField(y_prev, z_prev, model, driver, term if term is not None else xi, meta)


def default_m_schedule(A: float) -> list:
    """Indices A+1, 2(A+1), 4(A+1), 8(A+1)."""
    return [(A + 1.0) * 2**i for i in range(4)]


def default_lattice_size(T: float, m_max: float) -> int:
    """Smallest power of two N with m_max * T / N <= 1/2."""
    need = max(1.0, 2.0 * m_max * T)
    return 2 ** int(math.ceil(math.log2(need) - 1e-12))


def check_schedule(model: LatticeModel, A: float, m_schedule, scheme="explicit"):
    ms = [float(m) for m in m_schedule]
    if not ms:
        raise SolverError("empty m schedule")
    if any(b <= a for a, b in zip(ms, ms[1:])):
        raise SolverError(f"m schedule must be strictly increasing, got {ms}")
    if ms[0] <= A:
        raise SolverError(f"m schedule must stay above A={A}, got {ms}")
    _check_step_condition(ms[-1], model.dt, scheme, what="m")
    return ms


def extremal_solution(model, base: Driver, xi, m_schedule, kind, scheme="explicit",
                      h=None, refine=True, exploit_lipschitz=True):
    ms = check_schedule(model, base.A, m_schedule, scheme)
    h = model.dt if h is None else h
    out = []
    for m in ms:
        env = EnvelopeDriver(base, m, kind, h, refine, exploit_lipschitz)
        sol = _backward(model, env, xi, scheme)
        sol.meta.update({"m": m, "envelope": kind, "h": h})
        out.append(sol)
        log.debug("%s envelope m=%g: y0=%.6g", kind, m, sol.y0)
    return out


def minimal_solution(model, base: Driver, xi, m_schedule=None, scheme="explicit", h=None,
                     exploit_lipschitz=True):
    """Solutions with the lower envelopes, one per m; the last approximates the minimal one."""
    m_schedule = default_m_schedule(base.A) if m_schedule is None else m_schedule
    return extremal_solution(model, base, xi, m_schedule, "lower", scheme, h,
                             exploit_lipschitz=exploit_lipschitz)


def maximal_solution(model, base: Driver, xi, m_schedule=None, scheme="explicit", h=None,
                     exploit_lipschitz=True):
    """Mirror of ``minimal_solution`` with the upper envelopes."""
    m_schedule = default_m_schedule(base.A) if m_schedule is None else m_schedule
    return extremal_solution(model, base, xi, m_schedule, "upper", scheme, h,
                             exploit_lipschitz=exploit_lipschitz)


def scheme_error_estimate(solution: SolutionField) -> float:
    """Sup-norm gap between the explicit and implicit schemes on the same lattice."""
    scheme = solution.meta.get("scheme")
    if scheme not in SCHEMES:
        raise SolverError(f"no scheme-error estimate for scheme {scheme!r}")
    other = "implicit" if scheme == "explicit" else "explicit"
    K = getattr(solution.driver, "lipschitz", None)
    if K is not None and other == "explicit" and K * solution.model.dt > 0.5:
        raise SolverError("explicit re-solve violates K*dt <= 1/2")
    alt = _backward(solution.model, solution.driver, solution.terminal, other)
    return max(float(np.max(np.abs(a - b))) for a, b in zip(solution.y.values, alt.y.values))


class BSDESolver(BaseEstimator):
    """Lattice BSDE solver with an estimator interface.

    ``fit(terminal)`` accepts a TerminalValue, DSL source in ``w``, a constant
    or an array of the N + 1 terminal node values.  ``predict`` maps rows
    ``(t, w)`` to y at the matching lattice node.

    Parameters
    ----------
    driver : Driver
    T : float
        Horizon.
    N : int or None
        Number of steps.  ``None`` picks the smallest power of two satisfying
        the scheme condition for the method's largest Lipschitz index.
    method : {"lipschitz", "picard", "minimal", "maximal"}
    scheme : {"explicit", "implicit"}
    m_schedule : list of float or None
        Envelope indices for ``minimal``/``maximal``; defaults to
        ``default_m_schedule(driver.A)``.
    h : float or None
        Envelope grid step (defaults to dt).
    iters : int
        Sweeps for ``picard``.
    """

    def __init__(self, driver=None, T=1.0, N=None, method="lipschitz", scheme="explicit",
                 m_schedule=None, h=None, iters=50):
        self.driver = driver
        self.T = T
        self.N = N
        self.method = method
        self.scheme = scheme
        self.m_schedule = m_schedule
        self.h = h
        self.iters = iters

    def _resolve_N(self):
        if self.N is not None:
            return int(self.N)
        if self.method in ("minimal", "maximal"):
            ms = self.m_schedule or default_m_schedule(self.driver.A)
            return default_lattice_size(self.T, max(ms))
        K = self.driver.lipschitz or 0.0
        return max(1, default_lattice_size(self.T, K))

    def fit(self, X, y=None):
        if not isinstance(self.driver, (Driver, EnvelopeDriver)):
            raise SolverError("driver must be a Driver")
        self.lattice_ = build(self.T, self._resolve_N())
        if self.method == "lipschitz":
            self.solutions_ = [solve_lipschitz(self.lattice_, self.driver, X, self.scheme)]
        elif self.method == "picard":
            self.solutions_ = [picard_iterate(self.lattice_, self.driver, X, self.iters)]
        elif self.method in ("minimal", "maximal"):
            ms = self.m_schedule or default_m_schedule(self.driver.A)
            kind = "lower" if self.method == "minimal" else "upper"
            self.solutions_ = extremal_solution(self.lattice_, self.driver, X, ms, kind,
                                                self.scheme, self.h)
        else:
            raise SolverError(f"unknown method {self.method!r}")
        self.solution_ = self.solutions_[-1]
        self.y0_ = self.solution_.y0
        return self

    def _nodes(self, X):
        check_is_fitted(self, "solution_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("X must have two columns: t and w")
        model = self.lattice_
        k = np.rint(X[:, 0] / model.dt).astype(int)
        j2 = X[:, 1] / model.sqrt_dt + k
        j = np.rint(j2 / 2.0).astype(int)
        bad = (k < 0) | (k > model.N) | (j < 0) | (j > k) | \
            (np.abs(k * model.dt - X[:, 0]) > 1e-9 * max(1.0, model.T)) | \
            (np.abs(2 * j - j2) > 1e-6)
        if np.any(bad):
            raise ValueError(f"row {int(np.argmax(bad))} of X is not a lattice node")
        return k, j

    def predict(self, X):
        k, j = self._nodes(X)
        return np.array([self.solution_.y[a, b] for a, b in zip(k, j)])

    def predict_z(self, X):
        k, j = self._nodes(X)
        if np.any(k >= self.lattice_.N):
            raise ValueError("z is defined on steps 0..N-1 only")
        return np.array([self.solution_.z[a, b] for a, b in zip(k, j)])
