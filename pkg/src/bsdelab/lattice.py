"""Recombining Bernoulli random walk approximating a 1-d Brownian motion.

Node ``(k, j)`` sits at time ``k * dt`` and level ``j`` (number of up-moves),
with walk value ``w(k, j) = (2j - k) sqrt(dt)``.  Moving from ``(k, j)`` the
walk goes to ``(k+1, j)`` (down) or ``(k+1, j+1)`` (up) with probability 1/2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.stats import binom

__all__ = [
    "LatticeModel",
    "AdaptedField",
    "LatticeError",
    "build",
    "cond_expect",
    "martingale_coeff",
    "enumerate_paths",
    "path_levels",
    "sample_paths",
]

MAX_ENUM_N = 20


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeModel:
    T: float
    N: int

    def __post_init__(self):
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise LatticeError(f"N must be a positive integer, got {self.N!r}")
        if not self.T > 0:
            raise LatticeError(f"T must be positive, got {self.T!r}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def sqrt_dt(self) -> float:
        return float(np.sqrt(self.dt))

    @cached_property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def w(self, k: int) -> np.ndarray:
        """Walk values at the k + 1 nodes of step k."""
        return (2.0 * np.arange(k + 1) - k) * self.sqrt_dt

    def probabilities(self, k: int) -> np.ndarray:
        """Probability of reaching each node of step k from the root."""
        return binom.pmf(np.arange(k + 1), k, 0.5)

    def n_nodes(self, k: int) -> int:
        return k + 1

    def expectation(self, values, k=None) -> float:
        """E[f(step k)] for node values at step k (default: the terminal step)."""
        values = np.asarray(values, dtype=float)
        k = self.N if k is None else k
        if values.shape != (k + 1,):
            raise LatticeError(f"expected {k + 1} node values at step {k}, got {values.shape}")
        return float(np.dot(self.probabilities(k), values))


def build(T: float, N: int) -> LatticeModel:
    return LatticeModel(float(T), N)


class AdaptedField:
    """Per-step node values ``values[k]`` of shape ``(k + 1,)`` for k = 0..horizon."""

    def __init__(self, model: LatticeModel, horizon: int | None = None):
        self.model = model
        self.horizon = model.N if horizon is None else horizon
        self.values = [None] * (self.horizon + 1)

    @classmethod
    def from_function(cls, model, func, horizon=None):
        """Field with ``values[k] = func(t_k, w(k, .))``."""
        field = cls(model, horizon)
        for k in range(field.horizon + 1):
            field[k] = np.broadcast_to(
                np.asarray(func(model.times[k], model.w(k)), dtype=float), (k + 1,)
            )
        return field

    def __getitem__(self, k):
        if isinstance(k, tuple):
            k, j = k
            return float(self._step(k)[j])
        return self._step(k)

    def _step(self, k):
        v = self.values[k]
        if v is None:
            raise LatticeError(f"field has no values at step {k}")
        return v

    def __setitem__(self, k, values):
        values = np.array(values, dtype=float)
        if values.shape != (k + 1,):
            raise LatticeError(f"step {k} needs {k + 1} values, got shape {values.shape}")
        self.values[k] = values

    def is_complete(self) -> bool:
        return all(v is not None for v in self.values)

    def is_deterministic(self) -> bool:
        """True when the field is constant across every time slice."""
        return all(np.ptp(v) == 0.0 for v in self.values)

    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(v))) for v in self.values)

    def copy(self):
        out = AdaptedField(self.model, self.horizon)
        out.values = [None if v is None else v.copy() for v in self.values]
        return out


def _children(f, k):
    nxt = f[k + 1] if isinstance(f, AdaptedField) else np.asarray(f, dtype=float)
    if nxt is None or len(nxt) != k + 2:
        raise LatticeError(f"missing child values at step {k + 1}")
    return nxt


def cond_expect(f, k: int, j=None):
    """E[f_{k+1} | node (k, j)]; vectorized over j when ``j`` is None.

    ``f`` is either an AdaptedField or the array of its step-(k+1) values.
    """
    nxt = _children(f, k)
    out = 0.5 * nxt[:-1] + 0.5 * nxt[1:]
    return out if j is None else float(out[j])


def martingale_coeff(f, k: int, j=None, model: LatticeModel | None = None):
    """The z with f_{k+1} = E[f_{k+1} | (k, j)] + z * dW on both branches."""
    nxt = _children(f, k)
    model = model or getattr(f, "model", None)
    if model is None:
        raise LatticeError("martingale_coeff on a raw array needs the lattice model")
    out = (nxt[1:] - nxt[:-1]) / (2.0 * model.sqrt_dt)
    return out if j is None else float(out[j])


def path_levels(model: LatticeModel, max_n: int = MAX_ENUM_N, start: int = 0,
                stop: int | None = None) -> np.ndarray:
    """Levels j_k of paths ``start..stop`` (default all 2**N), shape ``(paths, N + 1)``.

    Every path has probability 2**-N.
    """
    if model.N > max_n:
        raise LatticeError(
            f"N={model.N} exceeds the enumeration limit {max_n}; sample paths instead"
        )
    n = model.N
    stop = 2**n if stop is None else min(stop, 2**n)
    codes = np.arange(start, stop, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)[None, :]) & 1
    levels = np.zeros((codes.size, n + 1), dtype=np.int64)
    np.cumsum(bits, axis=1, out=levels[:, 1:])
    return levels


def enumerate_paths(model: LatticeModel, max_n: int = MAX_ENUM_N):
    """Yield ``(probability, [(k, j), ...])`` for each of the 2**N paths."""
    if model.N > max_n:
        raise LatticeError(
            f"N={model.N} exceeds the enumeration limit {max_n}; sample paths instead"
        )
    prob = 0.5**model.N
    for moves in itertools.product((0, 1), repeat=model.N):
        levels = np.concatenate([[0], np.cumsum(moves)])
        yield prob, [(k, int(j)) for k, j in enumerate(levels)]


def sample_paths(model: LatticeModel, n_paths: int, seed: int) -> np.ndarray:
    """Uniformly sampled path levels, shape ``(n_paths, N + 1)``."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(n_paths, model.N), dtype=np.int64)
    levels = np.zeros((n_paths, model.N + 1), dtype=np.int64)
    np.cumsum(bits, axis=1, out=levels[:, 1:])
    return levels
