"""Uniform periodic grids and the discrete L2 space built on them.

Grid functions are sampled at left endpoints ``x_j = x0 + j*h`` with
``j = 0..n-1``; the right endpoint ``x1`` is identified with ``x0``.
Integrals use the rectangle rule, which is exact for trigonometric
polynomials resolved by the grid.

Discontinuous data (indicators, truncated profiles) is accepted, but
spectral shifting of such data produces Gibbs ripples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two objects live on incompatible grids."""


@dataclass(frozen=True)
class PeriodicGrid:
    x0: float
    x1: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.x0) and math.isfinite(self.x1)):
            raise ValueError("grid endpoints must be finite")
        if self.x1 <= self.x0:
            raise ValueError(f"need x1 > x0, got x0={self.x0}, x1={self.x1}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")

    @property
    def length(self) -> float:
        return self.x1 - self.x0

    @property
    def h(self) -> float:
        return (self.x1 - self.x0) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.x0 + np.arange(self.n) * self.h

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples of a function on a :class:`PeriodicGrid`.

    Supports ``+``, ``-``, negation and scalar multiplication; operands
    must share the same grid.
    """

    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] != self.grid.n:
            raise GridMismatchError(
                f"expected {self.grid.n} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function samples must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def _check(self, other: "GridFunction"):
        if not isinstance(other, GridFunction):
            return NotImplemented
        if other.grid != self.grid:
            raise GridMismatchError("grid functions live on different grids")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return GridFunction(self.grid, self.values - other.values)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return GridFunction(self.grid, float(scalar) * self.values)

    __rmul__ = __mul__

    def __len__(self):
        return self.grid.n


@dataclass(frozen=True)
class ObservationGrid:
    """Midpoint rule on ``[l_min, l_max]`` with ``m`` equal cells."""

    l_min: float
    l_max: float
    m: int

    def __post_init__(self):
        if self.l_max <= self.l_min:
            raise ValueError("need l_max > l_min")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")

    @property
    def spacing(self) -> float:
        return (self.l_max - self.l_min) / self.m

    @property
    def nodes(self) -> np.ndarray:
        return self.l_min + (np.arange(self.m) + 0.5) * self.spacing

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.m, self.spacing)

    @classmethod
    def for_cld(cls, x_max: float, m: int) -> "ObservationGrid":
        return cls(0.0, 2.0 * x_max, m)


def _same_grid(f: GridFunction, g: GridFunction):
    if f.grid != g.grid:
        raise GridMismatchError("grid functions live on different grids")


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Rectangle-rule L2 inner product ``h * sum_j f_j g_j``."""
    _same_grid(f, g)
    # math.fsum has a fixed order-independent result, so the product is
    # bitwise symmetric
    return f.grid.h * math.fsum((f.values * g.values).tolist())


def norm(f: GridFunction) -> float:
    return math.sqrt(max(inner_product(f, f), 0.0))


def periodic_wrap(x: float, grid: PeriodicGrid) -> float:
    """Reduce ``x`` into ``[x0, x1)`` modulo the grid length."""
    r = grid.x0 + math.fmod(x - grid.x0, grid.length)
    if r < grid.x0:
        r += grid.length
    if r >= grid.x1:
        # fmod + add can round up onto x1
        r = grid.x0
    return r


def periodic_wrap_array(x: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    r = grid.x0 + np.mod(np.asarray(x, dtype=float) - grid.x0, grid.length)
    return np.where(r >= grid.x1, grid.x0, r)


def from_closure(grid: PeriodicGrid, f: Callable[[float], float]) -> GridFunction:
    """Sample a pointwise function at the grid nodes.

    ``f`` is called once per node with a Python float, so plain scalar
    lambdas work; vectorised callables are fine too.
    """
    values = np.array([float(f(float(x))) for x in grid.nodes])
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ValueError(f"non-finite sample at node {bad} (x={grid.nodes[bad]})")
    return GridFunction(grid, values)
