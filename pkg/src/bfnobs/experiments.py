"""Deterministic experiment orchestration behind the command line.

Each experiment kind writes CSVs into its output directory and finishes by
writing ``manifest.json`` atomically. Randomness comes only from
``numpy.random.default_rng(cfg.seed)``.

CSV schemas (header row first):

* ``trajectory.csv``: ``t, error_norm, output_residual, output_error``
* ``barbalat.csv``: ``window, output_energy``
* ``bfn.csv``: ``iteration, error_norm, projected_error_norm, residual_integral``
  (``residual_integral`` of row ``k`` is the output misfit of the forward
  sweep started from iterate ``k``; the last row holds ``-1`` because no
  sweep follows it)
* ``estimate.csv`` / ``csd.csv``: ``x, truth, estimate``
* ``eigenvalues.csv``: ``index, eigenvalue`` (descending)
* ``errors.csv``: ``iteration, csd_error, nucleation_error``
* ``nucleation.csv``: ``t, truth, estimate``
* ``kernel.csv``: ``l, x, k``
* ``margins.csv``: ``n, cld_margin, window_margin, rank_tol``
"""

from __future__ import annotations

import functools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bfnobs import __version__
from bfnobs.config import ExperimentConfig, serialize, to_dict
from bfnobs.crystallization import (
    CrystallizationScenario,
    estimate_nucleation,
    gaussian_pulse,
    make_observer,
    reconstruct_csd,
)
from bfnobs.function_space import GridFunction, PeriodicGrid
from bfnobs.gramian import assemble_gramian, exact_observability_margin, geometric_condition
from bfnobs.io import export_eigenvalues_csv, export_kernel_csv, write_columns, write_json_atomic
from bfnobs.observation import CldKernelObserver, WindowObserver
from bfnobs.observers import (
    ObserverConfig,
    barbalat_diagnostic,
    record_from_truth,
    run_bfn,
    run_forward_observer,
)
from bfnobs.transport import (
    TransportPropagator,
    constant_profile,
    relaxing_profile,
    sinusoidal_profile,
)

OUTPUT_ROOT_ENV = "BFNOBS_OUTPUT_ROOT"


class NumericalFailure(RuntimeError):
    """A computed result was NaN or infinite."""


@dataclass
class RunManifest:
    config: dict
    config_text: str
    version: str
    output_dir: str
    wall_time: float = 0.0
    files: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "config_text": self.config_text,
            "version": self.version,
            "output_dir": self.output_dir,
            "wall_time": self.wall_time,
            "files": self.files,
            "results": self.results,
        }


def build_profile(cfg: ExperimentConfig):
    p = cfg.profile
    if p.shape == "constant":
        return constant_profile(p.mean)
    if p.shape == "sinusoidal":
        return sinusoidal_profile(p.mean, p.amplitude, p.period)
    return relaxing_profile(p.mean, p.amplitude, p.rate)


def build_scenario(cfg: ExperimentConfig) -> CrystallizationScenario:
    c = cfg.crystallization
    return CrystallizationScenario(
        x_min=c.x_min,
        x_max=c.x_max,
        T=c.T,
        profile=sinusoidal_profile(c.growth_mean, c.growth_amplitude, c.growth_period),
        n0=functools.partial(gaussian_pulse, center=c.csd_center, width=c.csd_width),
        u=functools.partial(
            gaussian_pulse, center=c.nucleation_center, width=c.nucleation_width, height=c.nucleation_height
        ),
        noise_std=cfg.run.noise_std,
        seed=cfg.seed,
    )


def observer_config(cfg: ExperimentConfig) -> ObserverConfig:
    o = cfg.observer
    return ObserverConfig(r=o.r, dt=o.dt, scheme=o.scheme, correction=o.correction)


def _grid(cfg):
    return PeriodicGrid(cfg.grid.x0, cfg.grid.x1, cfg.grid.n)


def _observer(cfg, grid):
    o = cfg.observer
    if o.type == "window":
        return WindowObserver(grid, o.x_min, o.x_max)
    return CldKernelObserver(grid, o.x_min, o.x_max, o.chord_samples or None)


def random_smooth_state(grid: PeriodicGrid, modes: int, rng: np.random.Generator) -> GridFunction:
    """Trigonometric polynomial with ``1/k`` decaying Gaussian coefficients."""
    k = np.arange(1, modes + 1)
    a = rng.standard_normal(modes) / k
    b = rng.standard_normal(modes) / k
    phase = 2 * np.pi * np.outer(grid.nodes - grid.x0, k) / grid.length
    return GridFunction(grid, np.cos(phase) @ a + np.sin(phase) @ b)


def _finite(name: str, *arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(np.asarray(a, dtype=float))):
            raise NumericalFailure(f"{name}: non-finite values detected")


def _forward_observer(cfg, out: Path, files: list) -> dict:
    grid = _grid(cfg)
    prop = TransportPropagator(grid, build_profile(cfg), cfg.grid.interpolation)
    obs = _observer(cfg, grid)
    rng = np.random.default_rng(cfg.seed)
    truth = random_smooth_state(grid, cfg.run.initial_modes, rng)
    record = record_from_truth(prop, obs, truth, cfg.run.horizon, cfg.observer.dt, cfg.run.noise_std, cfg.seed)
    traj = run_forward_observer(prop, obs, observer_config(cfg), grid.zeros(), record, truth=truth)
    _finite("forward observer", traj.error_norms, traj.output_residuals)
    files.append(
        write_columns(
            out / "trajectory.csv",
            {
                "t": traj.times,
                "error_norm": traj.error_norms,
                "output_residual": traj.output_residuals,
                "output_error": traj.output_errors,
            },
        )
    )
    energy = barbalat_diagnostic(traj, cfg.run.window_len)
    files.append(write_columns(out / "barbalat.csv", {"window": np.arange(energy.size), "output_energy": energy}))
    return {
        "initial_error": float(traj.error_norms[0]),
        "final_error": float(traj.error_norms[-1]),
        "final_error_ratio": float(traj.error_norms[-1] / traj.error_norms[0]),
        "barbalat_first": float(energy[0]),
        "barbalat_last": float(energy[-1]),
    }


def _bfn(cfg, out: Path, files: list) -> dict:
    grid = _grid(cfg)
    prop = TransportPropagator(grid, build_profile(cfg), cfg.grid.interpolation)
    obs = _observer(cfg, grid)
    rng = np.random.default_rng(cfg.seed)
    truth = random_smooth_state(grid, cfg.run.initial_modes, rng)
    T = cfg.run.horizon
    record = record_from_truth(prop, obs, truth, T, cfg.observer.dt, cfg.run.noise_std, cfg.seed)
    analysis = assemble_gramian(prop, obs, 0.0, T)
    run = run_bfn(
        prop, obs, observer_config(cfg), grid.zeros(), record, cfg.run.iterations, analysis=analysis, truth=truth
    )
    errs = np.array(run.initial_error_norms)
    _finite("bfn", errs, run.final_estimate.values)
    residuals = np.array(run.output_residual_integrals + [-1.0])
    files.append(
        write_columns(
            out / "bfn.csv",
            {
                "iteration": np.arange(errs.size),
                "error_norm": errs,
                "projected_error_norm": np.array(run.projected_error_norms),
                "residual_integral": residuals,
            },
        )
    )
    files.append(
        write_columns(
            out / "estimate.csv",
            {"x": grid.nodes, "truth": truth.values, "estimate": run.final_estimate.values},
        )
    )
    files.append(export_eigenvalues_csv(analysis, out / "eigenvalues.csv"))
    return {
        "initial_error": float(errs[0]),
        "final_error": float(errs[-1]),
        "final_error_ratio": float(errs[-1] / errs[0]),
        "final_projected_error": float(run.projected_error_norms[-1]),
        "gramian_dimension": analysis.dimension,
        "gramian_margin": exact_observability_margin(analysis),
    }


def _gramian_study(cfg, out: Path, files: list) -> dict:
    grid = _grid(cfg)
    profile = build_profile(cfg)
    prop = TransportPropagator(grid, profile, cfg.grid.interpolation)
    obs = _observer(cfg, grid)
    tau = cfg.run.horizon
    analysis = assemble_gramian(prop, obs, 0.0, tau)
    _finite("gramian", analysis.eigenvalues)
    files.append(export_eigenvalues_csv(analysis, out / "eigenvalues.csv"))
    if isinstance(obs, CldKernelObserver):
        files.append(export_kernel_csv(obs, out / "kernel.csv"))
    return {
        "gramian_margin": exact_observability_margin(analysis),
        "largest_eigenvalue": float(analysis.eigenvalues[0]),
        "rank_tol": analysis.rank_tol,
        "observable_dimension": analysis.dimension,
        "geometric_condition": geometric_condition(
            profile, 0.0, tau, cfg.observer.x_min, cfg.observer.x_max, grid
        ),
    }


def _crystallization(cfg, out: Path, files: list) -> dict:
    scn = build_scenario(cfg)
    rep = reconstruct_csd(
        scn,
        observer_config(cfg),
        cfg.run.iterations,
        obs_type=cfg.observer.type,
        n=cfg.grid.n,
        m=cfg.observer.chord_samples or None,
    )
    est = rep.estimate
    _finite("crystallization", est.values, rep.csd_error_per_iteration)
    files.append(
        write_columns(
            out / "errors.csv",
            {
                "iteration": np.arange(len(rep.csd_error_per_iteration)),
                "csd_error": rep.csd_error_per_iteration,
                "nucleation_error": rep.nucleation_error_per_iteration,
            },
        )
    )
    files.append(
        write_columns(
            out / "bfn.csv",
            {
                "iteration": np.arange(len(rep.bfn.initial_error_norms)),
                "error_norm": rep.bfn.initial_error_norms,
            },
        )
    )
    window = (rep.grid.nodes >= scn.x_min - 1e-12) & (rep.grid.nodes <= scn.x_max)
    files.append(
        write_columns(
            out / "csd.csv",
            {"x": rep.grid.nodes[window], "truth": rep.truth.values[window], "estimate": est.values[window]},
        )
    )
    t_nodes, u_hat = estimate_nucleation(est, scn)
    _, u_true = estimate_nucleation(rep.truth, scn)
    files.append(write_columns(out / "nucleation.csv", {"t": t_nodes, "truth": u_true, "estimate": u_hat}))
    if cfg.observer.type == "cld":
        obs = make_observer(scn, rep.grid, "cld", cfg.observer.chord_samples or None)
        files.append(export_kernel_csv(obs, out / "kernel.csv"))
    return {
        "csd_error": float(rep.csd_error_per_iteration[-1]),
        "nucleation_error": float(rep.nucleation_error_per_iteration[-1]),
        "final_error_ratio": float(rep.bfn.initial_error_norms[-1] / rep.bfn.initial_error_norms[0]),
    }


def refinement_entry(cfg: ExperimentConfig, n: int, sub: str) -> dict:
    """Gramian margins of the crystallisation scenario on one grid size."""
    scn = build_scenario(cfg)
    grid = scn.grid(n)
    prop = TransportPropagator(grid, scn.profile, cfg.grid.interpolation)
    out = {"n": n}
    for kind in ("cld", "window"):
        obs = make_observer(scn, grid, kind, cfg.observer.chord_samples or None)
        analysis = assemble_gramian(prop, obs, 0.0, scn.T)
        _finite("refinement gramian", analysis.eigenvalues)
        export_eigenvalues_csv(analysis, Path(sub) / f"eigenvalues_{kind}.csv")
        out[f"{kind}_margin"] = exact_observability_margin(analysis)
        if kind == "cld":
            out["rank_tol"] = analysis.rank_tol
    return out


def _refinement_study(cfg, out: Path, files: list, jobs: int = 1) -> dict:
    sizes = list(cfg.run.sizes)
    subs = [str(out / f"n{n}") for n in sizes]
    if jobs > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(sizes))) as pool:
            rows = list(pool.map(refinement_entry, [cfg] * len(sizes), sizes, subs))
    else:
        rows = [refinement_entry(cfg, n, s) for n, s in zip(sizes, subs)]
    for s in subs:
        files.extend(sorted(Path(s).glob("*.csv")))
    files.append(
        write_columns(
            out / "margins.csv",
            {
                "n": np.array(sizes),
                "cld_margin": [r["cld_margin"] for r in rows],
                "window_margin": [r["window_margin"] for r in rows],
                "rank_tol": [r["rank_tol"] for r in rows],
            },
        )
    )
    cld = [r["cld_margin"] for r in rows]
    return {
        "cld_margins": cld,
        "window_margins": [r["window_margin"] for r in rows],
        "cld_margin_non_increasing": bool(all(b <= a for a, b in zip(cld, cld[1:]))),
    }


_DISPATCH = {
    "forward_observer": _forward_observer,
    "bfn": _bfn,
    "gramian_study": _gramian_study,
    "crystallization": _crystallization,
}


def default_output_dir(cfg: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return Path(root) / f"{cfg.kind}-seed{cfg.seed}"


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> RunManifest:
    """Run one configured experiment, write its CSVs and finally the manifest."""
    out = Path(cfg.output_dir) if cfg.output_dir else default_output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    files: list = []
    start = time.perf_counter()
    with np.errstate(invalid="raise", divide="raise", over="raise"):
        try:
            if cfg.kind == "refinement_study":
                results = _refinement_study(cfg, out, files, jobs)
            else:
                results = _DISPATCH[cfg.kind](cfg, out, files)
        except FloatingPointError as exc:
            raise NumericalFailure(str(exc)) from exc
    for key, val in results.items():
        vals = val if isinstance(val, list) else [val]
        if any(isinstance(v, float) and not math.isfinite(v) for v in vals):
            raise NumericalFailure(f"result {key} is not finite")
    manifest = RunManifest(
        config=to_dict(cfg),
        config_text=serialize(cfg),
        version=__version__,
        output_dir=str(out),
        wall_time=time.perf_counter() - start,
        files=[str(Path(f).relative_to(out)) for f in files],
        results=results,
    )
    write_json_atomic(out / "manifest.json", manifest.as_dict())
    return manifest
