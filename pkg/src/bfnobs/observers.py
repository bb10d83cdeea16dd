"""Luenberger observers and back-and-forth nudging on the transport system.

A step of length ``dt`` uses Strang splitting: exact transport over
``dt/2``, the output-correction flow ``z' = -r C*(Cz - y)`` over ``dt``,
exact transport over ``dt/2``. The correction flow is linear with a
constant forcing (``y`` frozen at the step midpoint) and is integrated
exactly through the spectral decomposition of ``C*C``; an explicit RK4
sub-step is available for comparison.

Backward sweeps integrate in reversed time ``sigma = T - t``. In that
variable the backward observer is again "transport plus damping", so the
same stepper is reused with a negative time increment.

Output records are sampled on a half-step grid so that the midpoint
values used by the correction are stored samples, not interpolants. With
noise-free synthetic data the error ``z_hat - z`` then follows the
homogeneous error scheme exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from bfnobs.function_space import GridFunction, GridMismatchError
from bfnobs.gramian import GramianAnalysis, trapezoid_weights
from bfnobs.observation import WindowObserver
from bfnobs.transport import TransportPropagator

SCHEMES = ("strang_splitting", "lie_splitting")
DIRECTIONS = ("forward", "backward")
CORRECTIONS = ("exact", "rk4")

# largest |z| on the negative real axis inside the RK4 stability region
RK4_REAL_STABILITY = 2.785


class StiffnessError(RuntimeError):
    """Explicit correction sub-step would be unstable for this ``r * dt``."""


@dataclass(frozen=True)
class ObserverConfig:
    r: float = 5.0
    dt: float = 1.0 / 256
    scheme: str = "strang_splitting"
    direction: str = "forward"
    correction: str = "exact"

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 0):
            raise ValueError(f"gain r must be non-negative, got {self.r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.correction not in CORRECTIONS:
            raise ValueError(f"correction must be one of {CORRECTIONS}")


@dataclass(frozen=True, eq=False)
class OutputRecord:
    """Measured outputs ``y(t_i)`` on a uniform, ascending time grid."""

    times: np.ndarray
    values: np.ndarray  # shape (len(times), output_size)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("record needs at least two sample times")
        steps = np.diff(times)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps.mean():
            raise ValueError("record times must be uniform and ascending")
        if values.shape[0] != times.size:
            raise ValueError("one output sample per record time is required")
        if not np.all(np.isfinite(values)):
            raise ValueError("record contains non-finite outputs")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def step(self) -> float:
        return (self.times[-1] - self.times[0]) / (self.times.size - 1)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def sample(self, t: float) -> np.ndarray:
        """Stored sample when ``t`` is a record time, else linear interpolation."""
        pos = (t - self.times[0]) / self.step
        i = int(round(pos))
        if abs(pos - i) < 1e-6 and 0 <= i < self.times.size:
            return self.values[i]
        if pos < -1e-9 or pos > self.times.size - 1 + 1e-9:
            raise ValueError(f"time {t} outside record range [{self.start}, {self.end}]")
        i = min(max(int(math.floor(pos)), 0), self.times.size - 2)
        w = pos - i
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


@dataclass(frozen=True, eq=False)
class ObserverTrajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n)
    output_residuals: np.ndarray  # ||C z_hat - y||_Y
    error_norms: Optional[np.ndarray] = None  # ||z_hat - z||_X
    output_errors: Optional[np.ndarray] = None  # ||C (z_hat - z)||_Y
    grid: object = None

    def state(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.states[i])


@dataclass(eq=False)
class BfnRun:
    iteration_count: int
    initial_error_norms: list = field(default_factory=list)
    projected_error_norms: list = field(default_factory=list)
    output_residual_integrals: list = field(default_factory=list)
    iterates: list = field(default_factory=list)  # z_hat^{2n}(0) sample arrays
    final_estimate: Optional[GridFunction] = None


class Damping:
    """Exact (or RK4) solver of ``z' = -r (P z - b)`` over one step.

    ``P = C*C``. For a window observer ``P`` is a 0/1 diagonal; otherwise
    its eigendecomposition is computed once.
    """

    def __init__(self, obs, r: float, dt: float, method: str = "exact"):
        self.obs = obs
        self.r = r
        self.dt = abs(dt)
        self.method = method
        rdt = r * self.dt
        if isinstance(obs, WindowObserver):
            d = obs.gram_diagonal()
            self.diagonal = True
            self.E = np.exp(-rdt * d)
            self.Phi = np.where(d > 0, -np.expm1(-rdt * d) / np.where(d > 0, d, 1.0), rdt)
            self.P = None
            p_norm = 1.0 if d.any() else 0.0
        else:
            self.diagonal = False
            self.P = obs.gram_matrix()
            lam, V = np.linalg.eigh(self.P)
            lam = np.clip(lam, 0.0, None)
            p_norm = float(lam.max())
            tiny = 1e-14 * max(p_norm, 1e-300)
            e = np.exp(-rdt * lam)
            phi = np.where(lam > tiny, -np.expm1(-rdt * lam) / np.where(lam > tiny, lam, 1.0), rdt)
            self.E = (V * e) @ V.T
            self.Phi = (V * phi) @ V.T
        if method == "rk4" and rdt * p_norm > RK4_REAL_STABILITY:
            raise StiffnessError(
                f"r*dt*||C*C|| = {rdt * p_norm:.3g} exceeds the RK4 stability "
                f"limit {RK4_REAL_STABILITY}; use the exact correction or reduce dt"
            )
        if method == "rk4" and self.P is None:
            self.P = obs.gram_matrix()

    def apply(self, z: np.ndarray, y: Optional[np.ndarray]) -> np.ndarray:
        if self.r == 0.0:
            return z
        b = None if y is None else self.obs.adjoint_values(y)
        if self.method == "rk4":
            return self._rk4(z, b)
        if self.diagonal:
            shape = (-1,) + (1,) * (np.ndim(z) - 1)
            out = self.E.reshape(shape) * z
            if b is not None:
                out = out + self.Phi.reshape(shape) * b
            return out
        out = self.E @ z
        if b is not None:
            out = out + self.Phi @ b
        return out

    def _rk4(self, z, b):
        P, r, h = self.P, self.r, self.dt

        def rhs(v):
            Pv = P @ v
            return -r * (Pv if b is None else Pv - b)

        k1 = rhs(z)
        k2 = rhs(z + 0.5 * h * k1)
        k3 = rhs(z + 0.5 * h * k2)
        k4 = rhs(z + h * k3)
        return z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _step_values(prop, damping, z, t_a, t_b, y_mid, y_end, scheme):
    """Advance from ``t_a`` to ``t_b`` (either order) by one splitting step."""
    if scheme == "strang_splitting":
        m = 0.5 * (t_a + t_b)
        z = prop.propagate_values(z, m, t_a)
        z = damping.apply(z, y_mid)
        return prop.propagate_values(z, t_b, m)
    z = prop.propagate_values(z, t_b, t_a)
    return damping.apply(z, y_end)


def _check(prop, obs, f: GridFunction):
    if f.grid != prop.grid or obs.grid != prop.grid:
        raise GridMismatchError("state, observer and propagator must share one grid")


def observer_step(
    prop: TransportPropagator,
    obs,
    cfg: ObserverConfig,
    z_hat: GridFunction,
    y_t: np.ndarray,
    t: float,
) -> GridFunction:
    """One step of the forward (``t -> t+dt``) or backward (``t -> t-dt``) observer.

    ``y_t`` is the output used by the correction sub-step (the midpoint
    value for Strang splitting, the end value for Lie splitting).
    """
    _check(prop, obs, z_hat)
    damping = Damping(obs, cfg.r, cfg.dt, cfg.correction)
    t_b = t + cfg.dt if cfg.direction == "forward" else t - cfg.dt
    y = np.asarray(y_t, dtype=float)
    values = _step_values(prop, damping, z_hat.values, t, t_b, y, y, cfg.scheme)
    return GridFunction(prop.grid, values)


def _step_count(span: float, dt: float) -> int:
    n = int(round(span / dt))
    if n < 1 or abs(n * dt - span) > 1e-9 * max(span, 1.0):
        raise ValueError(f"horizon {span} is not an integer multiple of dt={dt}")
    return n


def _sweep(prop, obs, damping, z, t_start, t_end, n_steps, record, scheme, on_state=None):
    """Integrate from ``t_start`` to ``t_end``; ``record=None`` runs the error flow."""
    times = np.linspace(t_start, t_end, n_steps + 1)
    if on_state is not None:
        on_state(0, float(times[0]), z)
    for k in range(n_steps):
        t_a, t_b = float(times[k]), float(times[k + 1])
        if record is None:
            y_mid = y_end = None
        else:
            y_mid = record.sample(0.5 * (t_a + t_b))
            y_end = record.sample(t_b)
        z = _step_values(prop, damping, z, t_a, t_b, y_mid, y_end, scheme)
        if on_state is not None:
            on_state(k + 1, t_b, z)
    return z


def record_from_truth(
    prop: TransportPropagator,
    obs,
    z0: GridFunction,
    T: float,
    dt: float,
    noise_std: float = 0.0,
    seed: Optional[int] = None,
    t0: float = 0.0,
) -> OutputRecord:
    """Outputs of the exact trajectory from ``z0`` on the half-step grid of ``dt``.

    Gaussian noise of standard deviation ``noise_std`` is added per output
    sample (window observers: window samples only), drawn from a
    generator seeded with ``seed``.
    """
    _check(prop, obs, z0)
    n_half = 2 * _step_count(T - t0, dt)
    times = np.linspace(t0, T, n_half + 1)
    values = np.empty((times.size, obs.output_size))
    for i, t in enumerate(times):
        values[i] = obs.apply_values(prop.propagate_values(z0.values, float(t), t0))
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = noise_std * rng.standard_normal(values.shape)
        if isinstance(obs, WindowObserver):
            noise = noise * obs.mask[None, :]
        values = values + noise
    return OutputRecord(times, values)


def run_forward_observer(
    prop: TransportPropagator,
    obs,
    cfg: ObserverConfig,
    z_hat0: GridFunction,
    record: OutputRecord,
    truth: Optional[GridFunction] = None,
) -> ObserverTrajectory:
    """Forward Luenberger observer over the record's time span.

    ``truth`` is the true state at ``record.start``; when given, error
    norms and output-error norms along the trajectory are filled in.
    """
    _check(prop, obs, z_hat0)
    if cfg.direction != "forward":
        raise ValueError("run_forward_observer needs a forward configuration")
    if record.values.shape[1] != obs.output_size:
        raise GridMismatchError("record outputs do not match the observer")
    n_steps = _step_count(record.end - record.start, cfg.dt)
    damping = Damping(obs, cfg.r, cfg.dt, cfg.correction)
    times = np.linspace(record.start, record.end, n_steps + 1)
    states = np.empty((n_steps + 1, prop.grid.n))

    def keep(k, t, z):
        states[k] = z

    _sweep(prop, obs, damping, z_hat0.values, record.start, record.end, n_steps, record, cfg.scheme, keep)
    residuals = np.array(
        [obs.norm_y(obs.apply_values(states[k]) - record.sample(float(t))) for k, t in enumerate(times)]
    )
    err = out_err = None
    if truth is not None:
        _check(prop, obs, truth)
        h = prop.grid.h
        err = np.empty(n_steps + 1)
        out_err = np.empty(n_steps + 1)
        for k, t in enumerate(times):
            eps = states[k] - prop.propagate_values(truth.values, float(t), record.start)
            err[k] = math.sqrt(h * float(np.dot(eps, eps)))
            out_err[k] = obs.norm_y(obs.apply_values(eps))
    return ObserverTrajectory(times, states, residuals, err, out_err, prop.grid)


def run_bfn(
    prop: TransportPropagator,
    obs,
    cfg: ObserverConfig,
    z_hat0: GridFunction,
    record: OutputRecord,
    n_iterations: int,
    analysis: Optional[GramianAnalysis] = None,
    truth: Optional[GridFunction] = None,
) -> BfnRun:
    """Back-and-forth nudging for the initial state over the record span.

    Each cycle runs the forward observer from the current initial guess,
    then the backward observer from the forward end state back to the
    record start. ``truth`` is the true initial state; without it only
    output-residual integrals are recorded.
    """
    _check(prop, obs, z_hat0)
    if n_iterations < 0:
        raise ValueError("n_iterations must be non-negative")
    if record.values.shape[1] != obs.output_size:
        raise GridMismatchError("record outputs do not match the observer")
    t0, T = record.start, record.end
    n_steps = _step_count(T - t0, cfg.dt)
    damping = Damping(obs, cfg.r, cfg.dt, cfg.correction)
    h = prop.grid.h
    run = BfnRun(iteration_count=n_iterations)

    def diagnose(z):
        run.iterates.append(np.array(z))
        if truth is None:
            return
        eps = z - truth.values
        run.initial_error_norms.append(math.sqrt(h * float(np.dot(eps, eps))))
        if analysis is not None:
            E = analysis.basis_O
            peps = E @ (h * (E.T @ eps))
            run.projected_error_norms.append(math.sqrt(h * float(np.dot(peps, peps))))

    step_w = trapezoid_weights(np.linspace(t0, T, n_steps + 1))
    z = np.array(z_hat0.values)
    diagnose(z)
    for _ in range(n_iterations):
        acc = [0.0]

        def residual(k, t, state):
            r = obs.apply_values(state) - record.sample(t)
            acc[0] += step_w[k] * obs.inner_y(r, r)

        zT = _sweep(prop, obs, damping, z, t0, T, n_steps, record, cfg.scheme, residual)
        run.output_residual_integrals.append(acc[0])
        z = _sweep(prop, obs, damping, zT, T, t0, n_steps, record, cfg.scheme)
        diagnose(z)
    run.final_estimate = GridFunction(prop.grid, z)
    return run


def error_sweep(
    prop: TransportPropagator,
    obs,
    cfg: ObserverConfig,
    eps: np.ndarray,
    t_start: float,
    t_end: float,
    damping: Optional[Damping] = None,
    keep: bool = False,
):
    """Homogeneous error flow (``y = 0``) from ``t_start`` to ``t_end``.

    Returns the end state, or ``(times, states)`` when ``keep`` is set.
    """
    n_steps = _step_count(abs(t_end - t_start), cfg.dt)
    damping = damping or Damping(obs, cfg.r, cfg.dt, cfg.correction)
    if not keep:
        return _sweep(prop, obs, damping, np.array(eps, dtype=float), t_start, t_end, n_steps, None, cfg.scheme)
    states = np.empty((n_steps + 1,) + np.shape(eps))

    def store(k, t, z):
        states[k] = z

    _sweep(prop, obs, damping, np.array(eps, dtype=float), t_start, t_end, n_steps, None, cfg.scheme, store)
    return np.linspace(t_start, t_end, n_steps + 1), states


def cycle_map(
    prop: TransportPropagator,
    obs,
    cfg: ObserverConfig,
    f: np.ndarray,
    T: float,
    t0: float = 0.0,
    damping: Optional[Damping] = None,
) -> np.ndarray:
    """One BFN cycle on the error: ``S_-(t0, T) S_+(T, t0) f``.

    Accepts a matrix of column states.
    """
    damping = damping or Damping(obs, cfg.r, cfg.dt, cfg.correction)
    forward = error_sweep(prop, obs, cfg, f, t0, T, damping)
    return error_sweep(prop, obs, cfg, forward, T, t0, damping)


def duhamel_residual(
    prop: TransportPropagator,
    obs,
    cfg: ObserverConfig,
    eps0: GridFunction,
    t: float,
    n_quad: Optional[int] = None,
) -> float:
    """``|| eps(t) - T(t,0) eps0 + r int_0^t T(t,s) C*C eps(s) ds ||``.

    ``eps`` is the discrete error trajectory with ``n_quad`` steps on
    ``[0, t]`` (default ``t / cfg.dt``); the integral is the trapezoid
    rule on the stored step states.
    """
    _check(prop, obs, eps0)
    if n_quad is None:
        n_quad = _step_count(t, cfg.dt)
    run_cfg = ObserverConfig(cfg.r, t / n_quad, cfg.scheme, "forward", cfg.correction)
    times, states = error_sweep(prop, obs, run_cfg, eps0.values, 0.0, t, keep=True)
    w = trapezoid_weights(times)
    integral = np.zeros(prop.grid.n)
    for s, ws, e in zip(times, w, states):
        ce = obs.adjoint_values(obs.apply_values(e))
        integral += ws * prop.propagate_values(ce, t, float(s))
    res = states[-1] - prop.propagate_values(eps0.values, t, 0.0) + cfg.r * integral
    return math.sqrt(prop.grid.h * float(np.dot(res, res)))


def barbalat_diagnostic(traj: ObserverTrajectory, window_len: float) -> np.ndarray:
    """Integrals of ``||C eps||^2`` over consecutive windows of length ``window_len``."""
    if traj.output_errors is None:
        raise ValueError("trajectory has no truth-based output errors")
    span = traj.times[-1] - traj.times[0]
    if not window_len > 0 or window_len > span * (1 + 1e-12):
        raise ValueError(f"window_len must lie in (0, {span}]")
    energy = traj.output_errors**2
    dt = np.diff(traj.times)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * dt * (energy[1:] + energy[:-1]))])
    n_win = int(math.floor(span / window_len + 1e-9))
    edges = traj.times[0] + window_len * np.arange(n_win + 1)
    at = np.interp(edges, traj.times, cumulative)
    return np.diff(at)
