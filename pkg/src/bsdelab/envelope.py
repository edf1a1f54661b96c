"""Lipschitz inf/sup-convolution envelopes of a continuous driver.

For a driver g with linear-growth constant A and an index m > A::

    lower_m(t, y, z) = inf_{u, v} g(t, u, v) + m (|y - u| + |z - v|)
    upper_m(t, y, z) = sup_{u, v} g(t, u, v) - m (|y - u| + |z - v|)

Both are m-Lipschitz in (y, z) and bracket g.  The optimization runs over a
grid of step h restricted to a ball around (y, z) whose radius is large enough
that nothing outside it can beat the center point (see ``search_radius``).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .drivers import Driver, DriverFamily

__all__ = [
    "EnvelopeError",
    "EnvelopeDriver",
    "EnvelopeFamily",
    "EnvelopeTransformer",
    "search_radius",
    "lower_envelope",
    "upper_envelope",
    "envelope_family",
]

KINDS = ("lower", "upper")

# grid points evaluated per chunk
_CHUNK = 2_000_000
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class EnvelopeError(ValueError):
    pass


def _zvec(z):
    return np.atleast_1d(np.asarray(z, dtype=float))


def search_radius(A: float, m: float, y: float, z) -> float:
    """Radius R = 2A(1 + |y| + |z|) / (m - A) of the (u, v) ball that holds the optimum.

    Any (u, v) at distance r from (y, z) has objective at least
    ``-A(1 + |y| + |z|) + (m - A) r``, which exceeds the center's value
    ``A(1 + |y| + |z|)`` once r > R.
    """
    if not m > A:
        raise EnvelopeError(f"envelope index m={m} must exceed the growth constant A={A}")
    znorm = float(np.linalg.norm(_zvec(z)))
    return 2.0 * A * (1.0 + abs(float(y)) + znorm) / (m - A)


def _golden_min(f, a, b, iters=24):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _active_axes(base: Driver, dim_z: int):
    axes = []
    if base.depends_on_y:
        axes.append(0)
    if base.depends_on_z:
        axes.extend(range(1, 1 + dim_z))
    return axes


def _distance(offsets):
    # offsets[..., 0] is the y-offset, the rest the z-offset (Euclidean)
    dy = np.abs(offsets[..., 0])
    if offsets.shape[-1] == 2:
        return dy + np.abs(offsets[..., 1])
    return dy + np.linalg.norm(offsets[..., 1:], axis=-1)


def _envelope_point(base, m, t, y, z, h, sign, refine):
    """min over the grid of sign*g(t, u, v) + m*dist; returns sign * minimum."""
    if not h > 0:
        raise EnvelopeError(f"grid step h must be positive, got {h}")
    z = _zvec(z)
    d = z.size
    center = np.concatenate([[float(y)], z])

    def objective(points):
        u = points[..., 0]
        v = points[..., 1] if d == 1 else points[..., 1:]
        g = np.asarray(base(t, u, v), dtype=float)
        return sign * g + m * _distance(points - center)

    best_point = center.copy()
    best = float(objective(center[None, :])[0])

    R = search_radius(base.A, m, y, z)
    axes = _active_axes(base, d)
    n = int(math.floor(R / h + 1e-12))
    if n > 0 and axes:
        steps = np.arange(-n, n + 1) * h
        # iterate the grid in chunks over the leading active axis
        rest = len(axes) - 1
        per_lead = (2 * n + 1) ** rest
        lead_chunk = max(1, _CHUNK // max(per_lead, 1))
        tail = list(itertools.product(steps, repeat=rest)) if rest else [()]
        tail = np.array(tail, dtype=float).reshape(len(tail), rest)
        for start in range(0, steps.size, lead_chunk):
            lead = steps[start:start + lead_chunk]
            offs = np.zeros((lead.size, tail.shape[0], 1 + d))
            offs[:, :, axes[0]] = lead[:, None]
            for i, ax in enumerate(axes[1:]):
                offs[:, :, ax] = tail[None, :, i]
            offs = offs.reshape(-1, 1 + d)
            inside = _distance(offs) <= R + 1e-12
            pts = center + offs[inside]
            if pts.shape[0] == 0:
                continue
            vals = objective(pts)
            i = int(np.argmin(vals))
            if vals[i] < best:
                best, best_point = float(vals[i]), pts[i]

    if refine and axes and n > 0:
        for ax in axes:
            def line(x, ax=ax):
                p = best_point.copy()
                p[ax] = x
                return float(objective(p[None, :])[0])

            x, fx = _golden_min(line, best_point[ax] - h, best_point[ax] + h)
            if fx < best:
                best = fx
                best_point = best_point.copy()
                best_point[ax] = x
    return sign * best


def lower_envelope(base: Driver, m: float, t: float, y: float, z, h: float,
                   refine: bool = True) -> float:
    """Grid approximation of inf_{u,v} g(t,u,v) + m(|y-u| + |z-v|); never above g(t,y,z)."""
    return _envelope_point(base, m, t, y, z, h, 1.0, refine)


def upper_envelope(base: Driver, m: float, t: float, y: float, z, h: float,
                   refine: bool = True) -> float:
    """Grid approximation of sup_{u,v} g(t,u,v) - m(|y-u| + |z-v|); never below g(t,y,z)."""
    return _envelope_point(base, m, t, y, z, h, -1.0, refine)


class EnvelopeDriver:
    """An envelope of ``base`` usable anywhere a Driver is.

    Values are memoized on the exact (t, y, z) inputs.  When ``base`` declares
    a Lipschitz constant K <= m the envelope coincides with ``base`` and, with
    ``exploit_lipschitz`` set, is evaluated directly.
    """

    def __init__(self, base: Driver, m: float, kind: str = "lower", h: float = 1e-2,
                 refine: bool = True, exploit_lipschitz: bool = True):
        if kind not in KINDS:
            raise EnvelopeError(f"kind must be one of {KINDS}, got {kind!r}")
        exact = exploit_lipschitz and base.lipschitz is not None and base.lipschitz <= m
        if not (m > base.A or exact):
            raise EnvelopeError(
                f"envelope index m={m} must exceed the growth constant A={base.A}"
            )
        if not h > 0:
            raise EnvelopeError(f"grid step h must be positive, got {h}")
        self.base = base
        self.m = float(m)
        self.kind = kind
        self.h = float(h)
        self.refine = refine
        self.exploit_lipschitz = exploit_lipschitz
        self._memo = {}

    A = property(lambda self: self.base.A)
    lipschitz = property(lambda self: self.m)
    depends_on_y = property(lambda self: self.base.depends_on_y)
    depends_on_z = property(lambda self: self.base.depends_on_z)
    dim_z = property(lambda self: self.base.dim_z)

    @property
    def name(self):
        return f"{self.kind}[m={self.m:g}]({self.base.name})"

    @property
    def is_exact(self) -> bool:
        K = self.base.lipschitz
        return self.exploit_lipschitz and K is not None and K <= self.m

    def point(self, t, y, z) -> float:
        if self.is_exact:
            return float(self.base(t, y, z))
        z = _zvec(z)
        key = (float(t), float(y), tuple(z.tolist()))
        hit = self._memo.get(key)
        if hit is None:
            sign = 1.0 if self.kind == "lower" else -1.0
            zarg = z if z.size > 1 else float(z[0])
            hit = _envelope_point(self.base, self.m, t, y, zarg, self.h, sign, self.refine)
            self._memo[key] = hit
        return hit

    def __call__(self, t, y, z):
        if self.is_exact:
            return self.base(t, y, z)
        d = self.base.dim_z
        z_ = np.asarray(z, dtype=float)
        zlead = z_.shape if d == 1 else z_.shape[:-1]
        lead = np.broadcast_shapes(np.shape(t), np.shape(y), zlead)
        rows = np.empty(lead + (2 + d,))
        rows[..., 0] = t
        rows[..., 1] = y
        rows[..., 2:] = z_[..., None] if d == 1 else z_
        rows = rows.reshape(-1, 2 + d)
        uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
        vals = np.array([self.point(r[0], r[1], r[2:]) for r in uniq])
        out = vals[np.asarray(inverse).ravel()].reshape(lead)
        return float(out) if out.ndim == 0 else out


class EnvelopeFamily:
    """Envelopes of every slice of a DriverFamily at a common index m."""

    def __init__(self, family: DriverFamily, m: float, kind: str, h: float, refine=True):
        if not m > family.A:
            raise EnvelopeError(
                f"envelope index m={m} must exceed the uniform growth constant A={family.A}"
            )
        self.family = family
        self.m = float(m)
        self.kind = kind
        self.h = float(h)
        self.refine = refine
        self._slices = {}

    def __call__(self, lam) -> EnvelopeDriver:
        lam = float(lam)
        if lam not in self._slices:
            self._slices[lam] = EnvelopeDriver(self.family.slice(lam), self.m, self.kind,
                                               self.h, self.refine)
        return self._slices[lam]

    @property
    def at_lam0(self) -> EnvelopeDriver:
        return self(self.family.lam0)


def envelope_family(base: DriverFamily, m: float, kind: str = "lower",
                    h: float = 1e-2) -> EnvelopeFamily:
    return EnvelopeFamily(base, m, kind, h)


class EnvelopeTransformer(TransformerMixin, BaseEstimator):
    """Evaluate an envelope of ``driver`` on rows ``(t, y, z_1, ..., z_d)``.

    Parameters
    ----------
    driver : Driver
        Continuous base driver with linear-growth constant ``A``.
    m : float
        Envelope index, strictly greater than ``driver.A``.
    kind : {"lower", "upper"}
        Inf-convolution (``lower``) or sup-convolution (``upper``).
    h : float
        Grid step of the search.
    refine : bool
        Golden-section polish of the best grid point along each coordinate.
    """

    def __init__(self, driver=None, m=4.0, kind="lower", h=1e-2, refine=True):
        self.driver = driver
        self.m = m
        self.kind = kind
        self.h = h
        self.refine = refine

    def fit(self, X=None, y=None):
        if not isinstance(self.driver, Driver):
            raise EnvelopeError("driver must be a Driver instance")
        self.envelope_ = EnvelopeDriver(self.driver, self.m, self.kind, self.h, self.refine,
                                        exploit_lipschitz=False)
        self.lipschitz_ = float(self.m)
        self.n_features_in_ = 2 + self.driver.dim_z
        return self

    def transform(self, X):
        check_is_fitted(self, "envelope_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} columns; expected t, y and {self.driver.dim_z} z column(s)"
            )
        env = self.envelope_
        if self.driver.dim_z == 1:
            return np.array([env.point(r[0], r[1], r[2]) for r in X])
        return np.array([env.point(r[0], r[1], r[2:]) for r in X])
