"""Observability Gramian of the transport system and the observable subspace.

``W(t0, tau) = int_{t0}^{t0+tau} T(t, t0)* C* C T(t, t0) dt`` is assembled
with the composite trapezoid rule. Because the state-space weights are
uniform, the X-adjoint of a sample-space matrix is its transpose and
``W`` is an ordinary symmetric matrix; eigenvectors are rescaled by
``1/sqrt(h)`` to be orthonormal in the discrete L2 product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bfnobs.function_space import GridFunction, GridMismatchError, PeriodicGrid
from bfnobs.observation import WindowObserver
from bfnobs.transport import TransportPropagator, VelocityProfile, cumulative_growth


@dataclass(frozen=True, eq=False)
class GramianAnalysis:
    grid: PeriodicGrid
    t0: float
    tau: float
    times: np.ndarray
    W: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # X-orthonormal columns
    rank_tol: float

    @property
    def basis_O(self) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues > self.rank_tol]

    @property
    def dimension(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > self.rank_tol))

    def apply(self, f: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.W @ f.values)


def default_time_samples(profile: VelocityProfile, t0: float, tau: float, grid: PeriodicGrid) -> int:
    """At least ten samples per cell crossing, never fewer than 16."""
    g = profile.sup_abs(t0, t0 + tau)
    return max(16, math.ceil(10.0 * tau * g / grid.h))


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def output_factor(obs) -> np.ndarray:
    """``R`` with ``R^T R = C*C`` on sample vectors, of minimal row count."""
    if isinstance(obs, WindowObserver):
        return np.eye(obs.grid.n)[obs.mask]
    P = obs.gram_matrix()
    lam, V = np.linalg.eigh(P)
    keep = lam > 1e-14 * max(lam.max(), 0.0)
    return np.sqrt(lam[keep])[:, None] * V[:, keep].T


def assemble_gramian(
    prop: TransportPropagator,
    obs,
    t0: float,
    tau: float,
    n_time: int | None = None,
) -> GramianAnalysis:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if obs.grid != prop.grid:
        raise GridMismatchError("observer and propagator live on different grids")
    grid = prop.grid
    if n_time is None:
        n_time = default_time_samples(prop.profile, t0, tau, grid)
    if n_time < 2:
        raise ValueError("n_time must be at least 2")
    times = np.linspace(t0, t0 + tau, n_time + 1)
    weights = trapezoid_weights(times)
    R = output_factor(obs)
    # R T(t, t0) = (T(t, t0)^T R^T)^T; propagating the identity keeps this
    # valid for non-orthogonal (linear) transport too
    W = np.zeros((grid.n, grid.n))
    for t, w in zip(times, weights):
        B = R @ prop.matrix(float(t), t0)
        W += w * (B.T @ B)
    W = 0.5 * (W + W.T)
    return _analyse(grid, t0, tau, times, W)


def _analyse(grid, t0, tau, times, W) -> GramianAnalysis:
    lam, V = np.linalg.eigh(W)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    V = V[:, order] / math.sqrt(grid.h)
    rank_tol = max(1e-8 * max(lam[0], 0.0), 1e-12)
    return GramianAnalysis(grid, t0, tau, times, W, lam, V, rank_tol)


def analysis_from_matrix(grid: PeriodicGrid, W: np.ndarray, t0=0.0, tau=1.0) -> GramianAnalysis:
    """Wrap an externally built symmetric Gramian matrix."""
    W = 0.5 * (np.asarray(W, dtype=float) + np.asarray(W, dtype=float).T)
    return _analyse(grid, t0, tau, np.array([t0, t0 + tau]), W)


def observable_subspace(analysis: GramianAnalysis) -> np.ndarray:
    """X-orthonormal basis (columns) of the span of eigenvectors above ``rank_tol``."""
    return analysis.basis_O


def project_observable(analysis: GramianAnalysis, f: GridFunction) -> GridFunction:
    if f.grid != analysis.grid:
        raise GridMismatchError("state and Gramian live on different grids")
    E = analysis.basis_O
    coeffs = analysis.grid.h * (E.T @ f.values)
    return GridFunction(f.grid, E @ coeffs)


def geometric_condition(
    profile: VelocityProfile,
    t0: float,
    tau: float,
    x_min: float,
    x_max: float,
    grid: PeriodicGrid,
) -> bool:
    """True when every point passes through the window within ``[t0, t0+tau]``."""
    if not (grid.x0 <= x_min < x_max <= grid.x1):
        raise ValueError("invalid observation window")
    swept = abs(cumulative_growth(profile, t0, t0 + tau))
    needed = grid.length - (x_max - x_min)
    return swept >= needed - 1e-12 * grid.length


def exact_observability_margin(analysis: GramianAnalysis) -> float:
    """Smallest eigenvalue of ``W``: the best ``delta`` in ``<Wz,z> >= delta |z|^2``."""
    return float(analysis.eigenvalues[-1])


def swept_node_mask(
    grid: PeriodicGrid,
    profile: VelocityProfile,
    x_min: float,
    x_max: float,
    t0: float,
    tau: float,
    n_time: int,
) -> np.ndarray:
    """Nodes reached by the characteristic feet of window nodes.

    For every time sample ``s`` and window node ``x``, the foot
    ``x - int_{t0}^s G`` is located on the grid and the two nodes of its
    linear-interpolation stencil (those with positive weight) are
    marked. This is the discrete swept set seen by linear transport.
    """
    from bfnobs.observation import window_mask

    inside = grid.nodes[window_mask(grid, x_min, x_max)]
    hit = np.zeros(grid.n, dtype=bool)
    for s in np.linspace(t0, t0 + tau, n_time + 1):
        c = cumulative_growth(profile, t0, float(s))
        p = np.mod((inside - c - grid.x0) / grid.h, grid.n)
        near = np.abs(p - np.round(p)) < 1e-12
        lo = np.floor(np.where(near, np.round(p), p)).astype(int) % grid.n
        frac = np.where(near, 0.0, p - np.floor(p))
        hit[lo] = True
        hit[(lo[frac > 0] + 1) % grid.n] = True
    return hit
