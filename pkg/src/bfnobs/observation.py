"""Bounded output operators ``C: X -> Y`` with exact discrete adjoints.

Outputs are plain numpy arrays; each observer knows the quadrature
weights of its own output space, so ``inner_y`` / ``norm_y`` must be
used for ``Y`` norms.

* :class:`WindowObserver` restricts a state to ``[x_min, x_max]``. Its
  output is the full-length sample vector with zeros outside the window,
  weighted by the state-grid cell width, so ``C*C`` is a diagonal mask.
* :class:`CldKernelObserver` maps a crystal size distribution to the
  cumulative chord length distribution measured by an FBRM probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from bfnobs.function_space import (
    GridFunction,
    GridMismatchError,
    ObservationGrid,
    PeriodicGrid,
)

# nodes within this many cell widths of a window endpoint count as inside
_EDGE_TOL = 1e-9


def window_mask(grid: PeriodicGrid, x_min: float, x_max: float) -> np.ndarray:
    tol = _EDGE_TOL * grid.h
    x = grid.nodes
    return (x >= x_min - tol) & (x <= x_max + tol)


def _check_window(grid: PeriodicGrid, x_min: float, x_max: float):
    if not (grid.x0 <= x_min < x_max <= grid.x1):
        raise ValueError(
            f"window [{x_min}, {x_max}] must satisfy x0 <= x_min < x_max <= x1 "
            f"on [{grid.x0}, {grid.x1}]"
        )


@dataclass(frozen=True, eq=False)
class WindowObserver:
    grid: PeriodicGrid
    x_min: float
    x_max: float
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        _check_window(self.grid, self.x_min, self.x_max)
        mask = window_mask(self.grid, self.x_min, self.x_max)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def output_size(self) -> int:
        return self.grid.n

    @property
    def output_weights(self) -> np.ndarray:
        return np.full(self.grid.n, self.grid.h)

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        m = self.mask if np.ndim(values) == 1 else self.mask[:, None]
        return np.where(m, values, 0.0)

    def adjoint_values(self, g: np.ndarray) -> np.ndarray:
        return self.apply_values(g)

    def gram_matrix(self) -> np.ndarray:
        """``C*C`` as a matrix on sample vectors."""
        return np.diag(self.mask.astype(float))

    def gram_diagonal(self) -> np.ndarray:
        return self.mask.astype(float)

    def inner_y(self, a: np.ndarray, b: np.ndarray) -> float:
        return self.grid.h * float(np.dot(np.where(self.mask, a, 0.0), b))

    def norm_y(self, a: np.ndarray) -> float:
        return math.sqrt(max(self.inner_y(a, a), 0.0))

    def operator_bound(self) -> float:
        return 1.0


def fbrm_kernel(x, l):
    """Cumulative chord-length kernel for a sphere of radius ``x``.

    ``k(x, l) = 1 - sqrt(1 - (l / 2x)^2)`` for ``l < 2x`` and 1 beyond.
    Vectorised over broadcastable ``x`` and ``l``.
    """
    x = np.asarray(x, dtype=float)
    l = np.asarray(l, dtype=float)
    if np.any(x <= 0):
        raise ValueError("crystal radius must be positive")
    if np.any(l < 0):
        raise ValueError("chord length must be non-negative")
    ratio = l / (2.0 * x)
    inside = ratio < 1.0
    root = np.sqrt(np.clip(1.0 - ratio**2, 0.0, None))
    out = np.where(inside, 1.0 - root, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class CldKernelObserver:
    """``(Cf)(l) = int_{x_min}^{x_max} k(x, l) f(x) dx`` on a chord grid.

    ``kernel_matrix[i, j] = k(x_j, l_i) * 1[x_j in window] * h`` so that
    ``C f = kernel_matrix @ f.values``. The adjoint is
    ``C* g = K^T (w * g) / h`` with ``w`` the chord-grid weights.
    """

    grid: PeriodicGrid
    x_min: float
    x_max: float
    m: int | None = None
    obs_grid: ObservationGrid = field(init=False)
    mask: np.ndarray = field(init=False, repr=False)
    kernel_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        _check_window(self.grid, self.x_min, self.x_max)
        if self.x_min <= 0:
            raise ValueError("CLD window needs x_min > 0 (radii must be positive)")
        m = 2 * self.grid.n if self.m is None else int(self.m)
        obs_grid = ObservationGrid.for_cld(self.x_max, m)
        mask = window_mask(self.grid, self.x_min, self.x_max)
        x = self.grid.nodes
        xs = np.where(mask, x, 1.0)  # keep the kernel defined off-window
        K = fbrm_kernel(xs[None, :], obs_grid.nodes[:, None]) * mask[None, :] * self.grid.h
        for arr in (mask, K):
            arr.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "obs_grid", obs_grid)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "kernel_matrix", K)

    @property
    def output_size(self) -> int:
        return self.obs_grid.m

    @property
    def output_weights(self) -> np.ndarray:
        return self.obs_grid.weights

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        return self.kernel_matrix @ values

    def adjoint_values(self, g: np.ndarray) -> np.ndarray:
        w = self.obs_grid.weights
        if np.ndim(g) > 1:
            w = w[:, None]
        return self.kernel_matrix.T @ (w * g) / self.grid.h

    def gram_matrix(self) -> np.ndarray:
        K = self.kernel_matrix
        P = K.T @ (self.obs_grid.weights[:, None] * K) / self.grid.h
        return 0.5 * (P + P.T)

    def inner_y(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.dot(self.obs_grid.weights * a, b))

    def norm_y(self, a: np.ndarray) -> float:
        return math.sqrt(max(self.inner_y(a, a), 0.0))

    def operator_bound(self) -> float:
        """Bochner-type bound ``sqrt(l_max (x_max - x_min)) * sup|k|``."""
        return math.sqrt(self.obs_grid.l_max * (self.x_max - self.x_min))

    def kernel_rows(self):
        """Yield ``(l, x, k)`` triples for the window columns."""
        x = self.grid.nodes
        cols = np.flatnonzero(self.mask)
        for i, l in enumerate(self.obs_grid.nodes):
            for j in cols:
                yield float(l), float(x[j]), float(self.kernel_matrix[i, j] / self.grid.h)


def _check_state(obs, f: GridFunction):
    if f.grid != obs.grid:
        raise GridMismatchError("state and observer live on different grids")


def apply(obs, f: GridFunction) -> np.ndarray:
    """Output ``C f`` as an array on the observer's output grid."""
    _check_state(obs, f)
    return obs.apply_values(f.values)


def adjoint_apply(obs, g: np.ndarray) -> GridFunction:
    """``C* g`` with respect to the weighted inner products of ``X`` and ``Y``."""
    g = np.asarray(g, dtype=float)
    if g.shape != (obs.output_size,):
        raise GridMismatchError(
            f"output has shape {g.shape}, observer expects ({obs.output_size},)"
        )
    return GridFunction(obs.grid, obs.adjoint_values(g))


def kernel_injectivity_margin(obs: CldKernelObserver) -> float:
    """Smallest singular value of ``C`` restricted to window-supported states.

    Norms are the weighted ``X`` and ``Y`` norms, so the value is
    comparable across grids. Zero when there are fewer chord samples
    than window columns.
    """
    cols = np.flatnonzero(obs.mask)
    if cols.size == 0:
        raise ValueError("observation window contains no grid nodes")
    if obs.obs_grid.m < cols.size:
        return 0.0
    scaled = (
        np.sqrt(obs.obs_grid.weights)[:, None]
        * obs.kernel_matrix[:, cols]
        / math.sqrt(obs.grid.h)
    )
    return float(np.linalg.svd(scaled, compute_uv=False).min())
