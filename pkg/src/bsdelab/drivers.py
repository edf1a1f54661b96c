"""Drivers g(t, y, z), parameterized driver families and terminal values."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dsl import (CompiledExpression, DSLError, Expression, evaluate, free_variables, parse,
                  pretty)

__all__ = [
    "Driver",
    "DriverFamily",
    "TerminalValue",
    "CatalogError",
    "catalog_lookup",
    "CATALOG",
    "audit_linear_growth",
    "audit_lipschitz",
    "as_driver",
    "as_terminal",
]


class CatalogError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class Driver:
    """Deterministic generator g(t, y, z) with declared growth/Lipschitz data.

    ``A`` is the linear-growth constant, ``lipschitz`` an optional declared
    Lipschitz constant in (y, z).  Either ``expr`` (a DSL expression in t, y, z)
    or ``func`` (a vectorized Python callable ``func(t, y, z)``) defines the
    values; ``func`` is the route for vector-valued z.
    """

    expr: Optional[Expression] = None
    A: float = 0.0
    lipschitz: Optional[float] = None
    name: str = ""
    func: Optional[Callable] = field(default=None, compare=False)
    dim_z: int = 1
    h1: bool = True
    h2: bool = True
    h3: bool = True

    def __post_init__(self):
        if isinstance(self.expr, str):
            object.__setattr__(self, "expr", parse(self.expr))
        if (self.expr is None) == (self.func is None):
            raise ValueError("exactly one of expr or func must be given")
        if self.expr is not None:
            extra = free_variables(self.expr) - {"t", "y", "z"}
            if extra:
                raise DSLError(f"driver uses variables outside (t, y, z): {sorted(extra)}")
            if self.dim_z != 1:
                raise ValueError("DSL drivers have scalar z (dim_z = 1)")
        if not self.A >= 0:
            raise ValueError(f"linear-growth constant A must be nonnegative, got {self.A}")
        if self.lipschitz is not None and not self.lipschitz >= 0:
            raise ValueError(f"Lipschitz constant must be nonnegative, got {self.lipschitz}")
        if not self.name:
            object.__setattr__(self, "name", self.source)
        if self.expr is not None:
            object.__setattr__(self, "_compiled", CompiledExpression(self.expr))

    @property
    def source(self) -> str:
        if self.expr is not None:
            return pretty(self.expr)
        return getattr(self.func, "__name__", "<callable>")

    @property
    def depends_on_y(self) -> bool:
        return self.func is not None or "y" in free_variables(self.expr)

    @property
    def depends_on_z(self) -> bool:
        return self.func is not None or "z" in free_variables(self.expr)

    def __call__(self, t, y, z):
        if self.func is not None:
            return self.func(t, y, z)
        out = self._compiled({"t": t, "y": y, "z": z})
        shape = np.broadcast(np.asarray(t), np.asarray(y), np.asarray(z)).shape
        if shape and np.ndim(out) == 0:
            return np.full(shape, out)
        return out


@dataclass(frozen=True)
class DriverFamily:
    """Drivers g^lam(t, y, z) indexed by ``lam`` in the interval ``domain``."""

    expr: Expression
    domain: tuple
    lam0: float
    A: float
    lipschitz: Optional[float] = None
    modulus: Optional[Callable] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if isinstance(self.expr, str):
            object.__setattr__(self, "expr", parse(self.expr))
        extra = free_variables(self.expr) - {"t", "y", "z", "lam"}
        if extra:
            raise DSLError(f"family uses variables outside (t, y, z, lam): {sorted(extra)}")
        lo, hi = self.domain
        if not lo <= self.lam0 <= hi:
            raise ValueError(f"lam0={self.lam0} outside domain {self.domain}")
        if not self.name:
            object.__setattr__(self, "name", pretty(self.expr))

    def contains(self, lam) -> bool:
        lo, hi = self.domain
        return lo <= lam <= hi

    def slice(self, lam) -> Driver:
        if not self.contains(lam):
            raise ValueError(f"lam={lam} outside domain {self.domain}")
        lam = float(lam)
        fixed = _substitute(self.expr, "lam", lam)
        return Driver(expr=fixed, A=self.A, lipschitz=self.lipschitz,
                      name=f"{self.name}[lam={lam!r}]")


def _substitute(node, name, value):
    from .dsl import Binary, Call, Num, Unary, Var

    if isinstance(node, Var):
        if node.name != name:
            return node
        return Num(value) if value >= 0 else Unary("-", Num(-value))
    if isinstance(node, Num):
        return node
    if isinstance(node, Unary):
        return Unary(node.op, _substitute(node.arg, name, value))
    if isinstance(node, Binary):
        return Binary(node.op, _substitute(node.left, name, value),
                      _substitute(node.right, name, value))
    return Call(node.name, tuple(_substitute(a, name, value) for a in node.args))


@dataclass(frozen=True)
class TerminalValue:
    """Terminal condition xi = f(W_T), an expression in ``w`` or a constant."""

    expr: Expression

    def __post_init__(self):
        if isinstance(self.expr, (int, float)):
            from .dsl import Num, Unary

            v = float(self.expr)
            object.__setattr__(self, "expr", Num(v) if v >= 0 else Unary("-", Num(-v)))
        elif isinstance(self.expr, str):
            object.__setattr__(self, "expr", parse(self.expr))
        extra = free_variables(self.expr) - {"w"}
        if extra:
            raise DSLError(f"terminal value may only use w, found {sorted(extra)}")
        object.__setattr__(self, "_compiled", CompiledExpression(self.expr))

    @property
    def is_constant(self) -> bool:
        return not free_variables(self.expr)

    @property
    def source(self) -> str:
        return pretty(self.expr)

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        out = self._compiled({"w": w})
        return np.broadcast_to(np.asarray(out, dtype=float), w.shape).copy()


def as_terminal(xi) -> TerminalValue:
    return xi if isinstance(xi, TerminalValue) else TerminalValue(xi)


# --------------------------------------------------------------------------
# catalog


def _remark33(params):
    return Driver(expr="3*powabs(y, 2/3)", A=3.0, lipschitz=None, name="remark33")


def _linear(params):
    a = float(params.get("a", 0.0))
    b = float(params.get("b", 0.0))
    K = max(abs(a), abs(b))
    return Driver(expr=f"({a!r})*y + ({b!r})*z", A=K, lipschitz=K,
                  name=f"linear({a!r},{b!r})")


def _zero(params):
    return Driver(expr="0", A=0.0, lipschitz=0.0, name="zero")


def _constant(params):
    c = float(params["c"])
    src = repr(c) if c >= 0 else f"-{-c!r}"
    return Driver(expr=src, A=abs(c), lipschitz=0.0, name=f"constant({c!r})")


def _linear_family(params):
    hi = float(params.get("lam_max", 1.0))
    lo = float(params.get("lam_min", 0.0))
    lam0 = float(params.get("lam0", 0.0))
    K = max(abs(lo), abs(hi))
    return DriverFamily(expr="lam*y", domain=(lo, hi), lam0=lam0, A=K, lipschitz=K,
                        modulus=lambda d, y=0.0, z=0.0: d * abs(y), name="linear_family")


def _remark33_shift(params):
    hi = float(params.get("lam_max", 1.0))
    # |3|y|^{2/3} + lam| <= 3(1+|y|) + |lam| <= (3+|lam|)(1+|y|)
    return DriverFamily(expr="3*powabs(y, 2/3) + lam", domain=(0.0, hi), lam0=0.0,
                        A=3.0 + abs(hi), modulus=lambda d, y=0.0, z=0.0: d,
                        name="remark33_shift")


def _remark33_tilt(params):
    hi = float(params.get("lam_max", 1.0))
    return DriverFamily(expr="3*powabs(y, 2/3) + lam*abs(y)", domain=(0.0, hi), lam0=0.0,
                        A=3.0 + abs(hi), name="remark33_tilt")


CATALOG = {
    "remark33": (_remark33, ()),
    "linear": (_linear, ()),
    "zero": (_zero, ()),
    "constant": (_constant, ("c",)),
    "linear_family": (_linear_family, ()),
    "remark33_shift": (_remark33_shift, ()),
    "remark33_tilt": (_remark33_tilt, ()),
}


def catalog_lookup(name: str, params=None):
    """Return the catalog Driver or DriverFamily called ``name``.

    ``linear`` takes ``a`` and ``b`` (default 0); ``constant`` requires ``c``.
    """
    params = dict(params or {})
    if name not in CATALOG:
        raise CatalogError(f"unknown catalog entry {name!r}; known: {sorted(CATALOG)}")
    factory, required = CATALOG[name]
    missing = [p for p in required if p not in params]
    if missing:
        raise CatalogError(f"catalog entry {name!r} is missing parameter(s) {missing}")
    return factory(params)


def as_driver(spec, A=None, lipschitz=None) -> Driver:
    """Coerce a Driver, a catalog call such as ``linear(a=1, b=2)``, or DSL source.

    DSL source needs the linear-growth constant ``A`` (and optionally
    ``lipschitz``) declared by the caller; constants are never inferred.
    """
    if isinstance(spec, Driver):
        return spec
    text = spec.strip()
    head, paren, rest = text.partition("(")
    head = head.strip()
    if head in CATALOG:
        params = {}
        body = rest.rstrip()
        if paren and body.endswith(")"):
            body = body[:-1]
        positional = ["a", "b"] if head == "linear" else ["c"]
        for i, item in enumerate(filter(None, (s.strip() for s in body.split(",")))):
            if "=" in item:
                k, v = item.split("=", 1)
                params[k.strip()] = float(v)
            else:
                params[positional[i]] = float(item)
        driver = catalog_lookup(head, params)
        if not isinstance(driver, Driver):
            raise CatalogError(f"catalog entry {head!r} is a driver family, not a driver")
        return driver
    if A is None:
        expr = parse(text)
        if not free_variables(expr):
            # A constant driver c has exact constants A = |c| and K = 0.
            c = float(evaluate(expr, {}))
            return Driver(expr=text, A=abs(c), lipschitz=0.0 if lipschitz is None
                          else float(lipschitz))
        raise DSLError(
            f"driver {text!r} is not a catalog entry; DSL drivers need a declared "
            "linear-growth constant A"
        )
    return Driver(expr=text, A=float(A),
                  lipschitz=None if lipschitz is None else float(lipschitz))


# --------------------------------------------------------------------------
# audits


def _box_samples(rng, n, T, box):
    t = rng.uniform(0.0, T, n)
    y = rng.uniform(-box, box, n)
    z = rng.uniform(-box, box, n)
    return t, y, z


def audit_linear_growth(driver, T=1.0, box=50.0, n=10_000, seed=0, tol=1e-9):
    """Largest violation of |g| <= A(1 + |y| + |z|) over uniform samples (<= 0 is clean)."""
    rng = np.random.default_rng(seed)
    t, y, z = _box_samples(rng, n, T, box)
    g = np.asarray(driver(t, y, z), dtype=float)
    excess = np.abs(g) - driver.A * (1 + np.abs(y) + np.abs(z))
    return float(np.max(excess)) - tol


def audit_lipschitz(driver, T=1.0, box=50.0, n=10_000, seed=0, tol=1e-9):
    """Largest violation of the declared Lipschitz bound over sampled pairs."""
    if driver.lipschitz is None:
        raise ValueError(f"driver {driver.name!r} declares no Lipschitz constant")
    rng = np.random.default_rng(seed)
    t, y1, z1 = _box_samples(rng, n, T, box)
    _, y2, z2 = _box_samples(rng, n, T, box)
    lhs = np.abs(np.asarray(driver(t, y1, z1)) - np.asarray(driver(t, y2, z2)))
    rhs = driver.lipschitz * (np.abs(y1 - y2) + np.abs(z1 - z2))
    return float(np.max(lhs - rhs)) - tol
