import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bfnobs.function_space import GridMismatchError, PeriodicGrid, from_closure, inner_product, norm
from bfnobs.transport import (
    TransportPropagator,
    VelocityProfile,
    characteristic_foot,
    constant_profile,
    cumulative_growth,
    evolution_distance,
    generator_apply,
    linear_shift,
    propagate,
    relaxing_profile,
    sinusoidal_profile,
    spectral_shift,
)

from conftest import random_state

seeds = st.integers(0, 2**31 - 1)
times = st.floats(-3.0, 3.0, allow_nan=False)


def quad_only(profile):
    """Same G without the closed-form antiderivative (forces quadrature)."""
    return VelocityProfile(profile.G)


# -- cumulative growth --------------------------------------------------------

def test_cumulative_growth_examples():
    assert cumulative_growth(constant_profile(1.0), 0.0, 0.5) == 0.5
    p = sinusoidal_profile(1.0, 0.5, 1.0)
    assert cumulative_growth(p, 0.7, 0.7) == 0.0
    assert cumulative_growth(p, 0.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    # independent oracle: quadrature without the closed form
    assert cumulative_growth(quad_only(p), 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_cumulative_growth_rejects_non_finite():
    bad = VelocityProfile(lambda t: math.inf)
    with pytest.raises(ValueError):
        cumulative_growth(bad, 0.0, 1.0)
    with pytest.raises(ValueError):
        cumulative_growth(constant_profile(1.0), 0.0, math.nan)


@given(times, times, times)
def test_cumulative_growth_additive_and_antisymmetric(s, u, t):
    for p in (relaxing_profile(1.0, 1.0, 1.0), quad_only(sinusoidal_profile(1.0, 0.5, 1.0))):
        a = cumulative_growth(p, s, u) + cumulative_growth(p, u, t)
        b = cumulative_growth(p, s, t)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(b))
        assert cumulative_growth(p, t, s) == pytest.approx(-b, abs=1e-13)


def test_quadrature_matches_closed_form():
    p = relaxing_profile(1.0, 1.0, 1.0)
    for t in (0.3, 1.7, 5.0):
        assert cumulative_growth(quad_only(p), 0.0, t) == pytest.approx(t + 1 - math.exp(-t), abs=1e-12)


# -- characteristics ----------------------------------------------------------

def test_characteristic_foot_examples():
    g = PeriodicGrid(0.0, 1.0, 16)
    one = constant_profile(1.0)
    assert characteristic_foot(0.25, 0.5, 0.0, one, g) == pytest.approx(0.75)
    assert characteristic_foot(0.3, 0.4, 0.4, one, g) == 0.3
    assert characteristic_foot(0.25, 0.0, 0.5, one, g) == pytest.approx(0.75)


# -- propagation --------------------------------------------------------------

@pytest.mark.parametrize("mode", ["spectral", "linear"])
@pytest.mark.parametrize("k", [1, 2, 5, -3])
def test_aligned_shift_is_rotation(mode, k, rng):
    grid = PeriodicGrid(0.0, 1.0, 64)
    # odd rotations meet the Nyquist convention; use data without a Nyquist mode
    f = random_state(grid, rng, smooth=True)
    prop = TransportPropagator(grid, constant_profile(1.0), mode)
    out = propagate(prop, f, k * grid.h, 0.0)
    assert np.allclose(out.values, np.roll(f.values, k), atol=1e-13)


def test_even_aligned_shift_exact_for_any_data(rng):
    grid = PeriodicGrid(0.0, 1.0, 64)
    f = random_state(grid, rng)
    out = spectral_shift(f.values, 4 * grid.h, grid)
    assert np.allclose(out, np.roll(f.values, 4), atol=1e-13)


def test_band_limited_shift_matches_analytic():
    grid = PeriodicGrid(0.0, 1.0, 128)
    prop = TransportPropagator(grid, constant_profile(1.0))
    f = from_closure(grid, lambda x: math.sin(2 * math.pi * x))
    exact = from_closure(grid, lambda x: math.sin(2 * math.pi * (x - 0.25)))
    assert np.max(np.abs(propagate(prop, f, 0.25, 0.0).values - exact.values)) <= 1e-12


def test_identity_when_t_equals_s(unit_grid, rng):
    f = random_state(unit_grid, rng)
    for mode in ("spectral", "linear"):
        prop = TransportPropagator(unit_grid, sinusoidal_profile(1, 0.5, 1), mode)
        assert np.max(np.abs(propagate(prop, f, 0.3, 0.3).values - f.values)) <= 1e-15


def test_consistency_with_analytic_solution():
    grid = PeriodicGrid(0.0, 2.0, 64)
    p = sinusoidal_profile(1.0, 0.5, 1.0)
    prop = TransportPropagator(grid, p)
    f0 = lambda x: math.cos(math.pi * x) + 0.3 * math.sin(3 * math.pi * x)
    c = cumulative_growth(p, 0.2, 1.1)
    out = propagate(prop, from_closure(grid, f0), 1.1, 0.2)
    assert np.max(np.abs(out.values - from_closure(grid, lambda x: f0(x - c)).values)) <= 1e-10


def test_propagate_grid_mismatch():
    prop = TransportPropagator(PeriodicGrid(0, 1, 8), constant_profile(1.0))
    with pytest.raises(GridMismatchError):
        propagate(prop, PeriodicGrid(0, 1, 16).zeros(), 1.0, 0.0)
    with pytest.raises(ValueError):
        TransportPropagator(PeriodicGrid(0, 1, 8), constant_profile(1.0), "cubic")


@given(seeds, times, times, times)
def test_evolution_laws_spectral(seed, t, s, tau):
    grid = PeriodicGrid(0.0, 1.0, 64)
    prop = TransportPropagator(grid, sinusoidal_profile(1.0, 0.5, 1.0))
    f = random_state(grid, np.random.default_rng(seed))
    a = prop.propagate_values(prop.propagate_values(f.values, s, tau), t, s)
    b = prop.propagate_values(f.values, t, tau)
    scale = np.linalg.norm(f.values)
    assert np.linalg.norm(a - b) <= 1e-11 * scale
    back = prop.propagate_values(prop.propagate_values(f.values, t, s), s, t)
    assert np.linalg.norm(back - f.values) <= 1e-11 * scale
    assert abs(norm(propagate(prop, f, t, s)) - norm(f)) <= 1e-12 * norm(f)


@given(seeds, st.floats(-5, 5, allow_nan=False))
def test_linear_mode_is_contractive(seed, shift):
    grid = PeriodicGrid(0.0, 1.0, 50)
    v = np.random.default_rng(seed).standard_normal(50)
    out = linear_shift(v, shift, grid)
    assert np.linalg.norm(out) <= np.linalg.norm(v) * (1 + 1e-12)


def test_matrix_columns(unit_grid, rng):
    prop = TransportPropagator(unit_grid, constant_profile(0.7))
    M = prop.matrix(0.4, 0.1)
    f = random_state(unit_grid, rng)
    assert np.allclose(M @ f.values, prop.propagate_values(f.values, 0.4, 0.1), atol=1e-13)
    # orthogonal in spectral mode
    assert np.allclose(M.T @ M, np.eye(unit_grid.n), atol=1e-12)


# -- generator ----------------------------------------------------------------

def test_generator_examples():
    grid = PeriodicGrid(0.0, 1.0, 64)
    prop = TransportPropagator(grid, constant_profile(1.0))
    assert np.max(np.abs(generator_apply(prop, from_closure(grid, lambda x: 3.0), 0.4).values)) <= 1e-13
    s = from_closure(grid, lambda x: math.sin(2 * math.pi * x))
    expected = from_closure(grid, lambda x: -2 * math.pi * math.cos(2 * math.pi * x))
    assert np.max(np.abs(generator_apply(prop, s, 0.9).values - expected.values)) <= 1e-11


@given(seeds, st.integers(4, 129))
def test_generator_skew_symmetric(seed, n):
    rng = np.random.default_rng(seed)
    grid = PeriodicGrid(0.0, 1.3, n)
    prop = TransportPropagator(grid, sinusoidal_profile(1.0, 0.5, 1.0))
    f, g = random_state(grid, rng), random_state(grid, rng)
    t = float(rng.uniform(0, 2))
    lhs = inner_product(generator_apply(prop, f, t), g) + inner_product(f, generator_apply(prop, g, t))
    assert abs(lhs) <= 1e-12 * norm(f) * norm(g) * max(1.0, prop.profile.G(t) * n)
    assert abs(inner_product(generator_apply(prop, f, t), f)) <= 1e-12 * norm(f) ** 2 * max(1.0, n)


def test_generator_is_derivative_of_propagator(unit_grid, rng):
    prop = TransportPropagator(unit_grid, sinusoidal_profile(1.0, 0.5, 1.0))
    f = random_state(unit_grid, rng, smooth=True)
    t, d = 0.37, 1e-5
    fd = (prop.propagate_values(f.values, t + d, t) - prop.propagate_values(f.values, t - d, t)) / (2 * d)
    assert np.allclose(fd, generator_apply(prop, f, t).values, atol=1e-7)


# -- limit systems ------------------------------------------------------------

def test_evolution_distance_examples():
    grid = PeriodicGrid(0.0, 1.0, 64)
    p = sinusoidal_profile(1.0, 0.5, 1.0)
    a, b = TransportPropagator(grid, p), TransportPropagator(grid, p)
    assert evolution_distance(a, b, 0.0, 2.0, 8) <= 1e-12
    c = TransportPropagator(grid, constant_profile(1.5))
    assert evolution_distance(c, c, 3.0, 2.0, 8) <= 1e-12
    with pytest.raises(ValueError):
        evolution_distance(a, b, 0.0, 1.0, 0)


def test_evolution_distance_decays_toward_limit():
    grid = PeriodicGrid(0.0, 1.0, 64)
    relaxing = TransportPropagator(grid, relaxing_profile(1.0, 1.0, 1.0))
    limit = TransportPropagator(grid, constant_profile(1.0))
    d1 = evolution_distance(relaxing, limit, 1.0, 2.0, 16)
    d8 = evolution_distance(relaxing, limit, 8.0, 2.0, 16)
    assert d8 <= d1
    assert d8 <= 0.1 * d1
    # on the same time samples the dense operator norm bounds every probe
    probe = evolution_distance(relaxing, limit, 8.0, 2.0, 16, n_time=17)
    exact = evolution_distance(relaxing, limit, 8.0, 2.0, 1, n_time=17, exact=True)
    assert probe <= exact * (1 + 1e-9)
    assert exact < 10 * probe


def test_evolution_distance_deterministic():
    grid = PeriodicGrid(0.0, 1.0, 32)
    a = TransportPropagator(grid, relaxing_profile(1.0, 1.0, 1.0))
    b = TransportPropagator(grid, constant_profile(1.0))
    assert evolution_distance(a, b, 1.0, 1.0, 4, seed=3) == evolution_distance(a, b, 1.0, 1.0, 4, seed=3)
