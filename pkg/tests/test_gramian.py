import numpy as np
import pytest
from hypothesis import given, strategies as st

from bfnobs.crystallization import gaussian_pulse
from bfnobs.function_space import GridFunction, GridMismatchError, PeriodicGrid, inner_product, norm
from bfnobs.gramian import (
    analysis_from_matrix,
    assemble_gramian,
    default_time_samples,
    exact_observability_margin,
    geometric_condition,
    observable_subspace,
    project_observable,
    swept_node_mask,
    trapezoid_weights,
)
from bfnobs.observation import CldKernelObserver, WindowObserver, window_mask
from bfnobs.transport import TransportPropagator, constant_profile, sinusoidal_profile

from conftest import random_state

seeds = st.integers(0, 2**31 - 1)


def window_setup(n=64, G=1.0, mode="spectral", x_min=0.6, x_max=1.0):
    grid = PeriodicGrid(0.0, 1.0, n)
    prop = TransportPropagator(grid, constant_profile(G), mode)
    return grid, prop, WindowObserver(grid, x_min, x_max)


def test_frozen_transport_gives_tau_times_gram():
    for obs_cls, args in ((WindowObserver, (0.6, 1.0)), (CldKernelObserver, (0.25, 1.0))):
        grid = PeriodicGrid(0.0, 1.0, 32)
        obs = obs_cls(grid, *args)
        a = assemble_gramian(TransportPropagator(grid, constant_profile(0.0)), obs, 0.0, 0.7, 16)
        assert np.max(np.abs(a.W - 0.7 * obs.gram_matrix())) <= 1e-12 * max(1.0, np.abs(obs.gram_matrix()).max())


def test_full_window_gives_scaled_identity():
    grid, prop, obs = window_setup(48, x_min=0.0, x_max=1.0)
    a = assemble_gramian(prop, obs, 0.0, 0.5)
    assert np.max(np.abs(a.W - 0.5 * np.eye(48))) <= 1e-12
    assert observable_subspace(a).shape == (48, 48)
    assert exact_observability_margin(a) == pytest.approx(0.5, abs=1e-12)


def test_boundary_case_of_geometric_condition_is_observable():
    grid, prop, obs = window_setup(128)
    a = assemble_gramian(prop, obs, 0.0, 0.6)
    assert geometric_condition(prop.profile, 0.0, 0.6, 0.6, 1.0, grid)
    assert exact_observability_margin(a) > a.rank_tol


def test_analysis_invariants(rng):
    grid, prop, obs = window_setup(64, mode="spectral")
    a = assemble_gramian(TransportPropagator(grid, sinusoidal_profile(1.0, 0.5, 1.0)), obs, 0.1, 0.45)
    assert np.max(np.abs(a.W - a.W.T)) <= 1e-12 * np.abs(a.W).max()
    assert a.eigenvalues[-1] >= -1e-10 * a.eigenvalues[0]
    assert np.all(np.diff(a.eigenvalues) <= 0)
    E = a.basis_O
    assert np.max(np.abs(grid.h * E.T @ E - np.eye(E.shape[1]))) <= 1e-10
    assert a.dimension == E.shape[1]


def test_observable_subspace_examples():
    grid = PeriodicGrid(0.0, 1.0, 40)
    a = analysis_from_matrix(grid, 0.3 * np.eye(40), tau=0.3)
    assert a.dimension == 40
    assert exact_observability_margin(a) == pytest.approx(0.3)
    # frozen transport: span of the window node indicators
    obs = WindowObserver(grid, 0.6, 1.0)
    a = assemble_gramian(TransportPropagator(grid, constant_profile(0.0)), obs, 0.0, 1.0, 4)
    assert a.dimension == int(obs.mask.sum())
    assert np.all(np.abs(a.basis_O[~obs.mask]) <= 1e-12)


def test_observable_dimension_matches_brute_force_sweep():
    # time samples moving the window by an even number of cells: every
    # T(t, 0) is then a permutation (odd shifts leave the Nyquist mode alone)
    grid, prop, obs = window_setup(80)
    a = assemble_gramian(prop, obs, 0.0, 0.2, n_time=8)
    swept = swept_node_mask(grid, prop.profile, 0.6, 1.0, 0.0, 0.2, 8)
    expected = int(window_mask(grid, 0.4, 1.0).sum())
    assert a.dimension == expected == int(swept.sum())


@pytest.mark.parametrize("n, tau", [(128, 0.2), (128, 0.35), (100, 0.3)])
def test_kernel_matches_swept_set_linear_mode(n, tau):
    grid, prop, obs = window_setup(n, mode="linear")
    a = assemble_gramian(prop, obs, 0.0, tau)
    swept = swept_node_mask(grid, prop.profile, 0.6, 1.0, 0.0, tau, len(a.times) - 1)
    support = np.linalg.norm(a.basis_O, axis=1) * np.sqrt(grid.h) > 1e-6
    assert not np.any(support ^ swept)
    assert a.dimension == int(swept.sum())


def test_smooth_state_in_unswept_region_is_in_kernel():
    grid, prop, obs = window_setup(128)
    a = assemble_gramian(prop, obs, 0.0, 0.2)
    f = GridFunction(grid, gaussian_pulse(grid.nodes, 0.2, 0.025))
    Wf = a.W @ f.values
    assert np.sqrt(grid.h) * np.linalg.norm(Wf) <= 1e-10 * a.eigenvalues[0] * norm(f)


def test_unswept_window_margin_is_zero():
    grid, prop, obs = window_setup(64, mode="linear")
    a = assemble_gramian(prop, obs, 0.0, 0.2)
    assert abs(exact_observability_margin(a)) <= 1e-10 * a.eigenvalues[0]


@given(seeds)
def test_gramian_trajectory_consistency(seed):
    rng = np.random.default_rng(seed)
    grid = PeriodicGrid(0.0, 1.0, 32)
    prop = TransportPropagator(grid, sinusoidal_profile(1.0, 0.5, 1.0))
    for obs in (WindowObserver(grid, 0.6, 1.0), CldKernelObserver(grid, 0.25, 1.0)):
        a = assemble_gramian(prop, obs, 0.2, 0.5, 24)
        f = random_state(grid, rng)
        w = trapezoid_weights(a.times)
        direct = sum(
            wi * obs.norm_y(obs.apply_values(prop.propagate_values(f.values, float(t), 0.2))) ** 2
            for t, wi in zip(a.times, w)
        )
        assert inner_product(a.apply(f), f) == pytest.approx(direct, rel=1e-10)


def test_monotone_in_tau():
    grid, prop, obs = window_setup(48)
    prev = None
    for tau in (0.1, 0.25, 0.5, 0.9):
        # a common time step keeps the quadrature of the shorter interval a subset
        a = assemble_gramian(prop, obs, 0.0, tau, n_time=int(round(tau * 200)))
        if prev is not None:
            assert np.all(np.sort(a.eigenvalues) >= np.sort(prev) - 1e-10)
        prev = a.eigenvalues


@given(seeds)
def test_projector_properties(seed):
    rng = np.random.default_rng(seed)
    grid, prop, obs = window_setup(64, mode="linear")
    a = assemble_gramian(prop, obs, 0.0, 0.25)
    f, g = random_state(grid, rng), random_state(grid, rng)
    pf = project_observable(a, f)
    assert np.allclose(project_observable(a, pf).values, pf.values, atol=1e-10)
    assert inner_product(pf, g) == pytest.approx(inner_product(f, project_observable(a, g)), abs=1e-10)
    assert norm(pf) <= norm(f) * (1 + 1e-12)
    assert norm(f) ** 2 == pytest.approx(norm(pf) ** 2 + norm(f - pf) ** 2, rel=1e-10)
    inside = GridFunction(grid, a.basis_O @ rng.standard_normal(a.dimension))
    assert np.allclose(project_observable(a, inside).values, inside.values, atol=1e-10)
    outside = f - pf
    assert norm(project_observable(a, outside)) <= 1e-10 * max(1.0, norm(f))
    with pytest.raises(GridMismatchError):
        project_observable(a, PeriodicGrid(0, 1, 8).zeros())


def test_geometric_condition_examples():
    grid = PeriodicGrid(0.0, 1.0, 64)
    one = constant_profile(1.0)
    assert geometric_condition(one, 0.0, 0.6, 0.6, 1.0, grid)
    assert not geometric_condition(one, 0.0, 0.3, 0.6, 1.0, grid)
    assert geometric_condition(constant_profile(-1.0), 0.0, 0.6, 0.6, 1.0, grid)
    with pytest.raises(ValueError):
        geometric_condition(one, 0.0, 0.6, 0.9, 0.1, grid)


def test_parameter_errors():
    grid, prop, obs = window_setup(16)
    with pytest.raises(ValueError):
        assemble_gramian(prop, obs, 0.0, 0.0)
    with pytest.raises(ValueError):
        assemble_gramian(prop, obs, 0.0, 0.5, n_time=1)
    with pytest.raises(GridMismatchError):
        assemble_gramian(prop, WindowObserver(PeriodicGrid(0, 1, 32), 0.6, 1.0), 0.0, 0.5)


def test_default_time_samples():
    grid = PeriodicGrid(0.0, 1.0, 128)
    assert default_time_samples(constant_profile(1.0), 0.0, 0.6, grid) == 768
    assert default_time_samples(constant_profile(0.0), 0.0, 0.6, grid) == 16
