import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vplk.grid import (
    GridError,
    PhaseField,
    SpatialGrid,
    WeightSpec,
    build_velocity_grid,
    l2_norm,
    lp_x_norm,
    maxwellian,
    multi_indices,
    neg_sobolev_norm,
    vel_inner,
    v_derivative,
    weight,
    x_derivative,
)

GAUSS = math.pi ** 1.5


def test_velocity_grid_small_nodes():
    g = build_velocity_grid(2, 1.0)
    assert np.allclose(g.axis, [-0.5, 0.5])
    assert g.spacing == 1.0 and g.cell_weight == 1.0
    assert np.allclose(build_velocity_grid(4, 2.0).axis, [-1.5, -0.5, 0.5, 1.5])


@pytest.mark.parametrize("n, V", [(3, 1.0), (4, 0.0), (4, -1.0), (0, 1.0)])
def test_velocity_grid_rejects(n, V):
    with pytest.raises(GridError):
        build_velocity_grid(n, V)


def test_velocity_grid_symmetric():
    g = build_velocity_grid(10, 3.0)
    assert np.allclose(g.axis, -g.axis[::-1])


def test_gaussian_mass_24():
    g = build_velocity_grid(24, 6.0)
    assert abs(g.cell_weight * g.mu.sum() / GAUSS - 1) < 0.01


def test_gaussian_mass_converges():
    errs = [abs(build_velocity_grid(n, 6.0).cell_weight * build_velocity_grid(n, 6.0).mu.sum() - GAUSS)
            for n in (8, 12)]
    assert math.log(errs[0] / errs[1]) / math.log(12 / 8) >= 2.0


def test_maxwellian_values():
    assert maxwellian(np.zeros(3)) == 1.0
    assert math.isclose(maxwellian(np.array([1.0, 0, 0])), math.exp(-1))
    assert math.isclose(maxwellian(np.ones(3)), math.exp(-3))


def test_weight_examples():
    v = np.array([[0.0, 1.0, 3.0], [0, 0, 0], [0, 0, 0]])
    assert np.allclose(weight(WeightSpec(2, 0, 1, 1), v), 1.0)
    assert np.allclose(weight(WeightSpec(2), v)[:2], [1.0, 4.0])
    with pytest.raises(GridError):
        WeightSpec(1, 0, 1, 1)
    with pytest.raises(GridError):
        WeightSpec(1, -0.1)


@settings(max_examples=30, deadline=None)
@given(l=st.floats(0, 4), q=st.floats(0, 0.1), a=st.integers(0, 2))
def test_weight_at_least_one(l, q, a):
    if l < a:
        return
    g = build_velocity_grid(6, 3.0)
    assert np.all(weight(WeightSpec(l, q, a, 0), g.v) >= 1.0)


def test_vel_inner(vg16):
    g = build_velocity_grid(24, 6.0)
    assert abs(vel_inner(g, g.sqrt_mu, g.sqrt_mu) / GAUSS - 1) < 0.01
    assert vel_inner(g, g.sqrt_mu, 0 * g.mu) == 0
    assert abs(vel_inner(g, g.v[0] * g.sqrt_mu, g.sqrt_mu)) < 1e-12
    with pytest.raises(GridError):
        vel_inner(g, g.mu, vg16.mu)


def test_parity_odd_functions(rng):
    g = build_velocity_grid(8, 4.0)
    r = rng.standard_normal(g.shape)
    odd = r - r[::-1, ::-1, ::-1]
    assert abs(vel_inner(g, odd, g.sqrt_mu)) < 1e-12


def test_norms():
    g = build_velocity_grid(24, 6.0)
    assert l2_norm(0 * g.mu, g) == 0
    assert abs(l2_norm(g.sqrt_mu, g) / math.sqrt(GAUSS) - 1) < 0.01
    assert l2_norm(g.sqrt_mu, g, weight_values=np.ones(g.shape)) == l2_norm(g.sqrt_mu, g)
    xg = SpatialGrid(1, 8, 2.0)
    f = np.arange(8.0) - 3.5
    assert lp_x_norm(f, xg, np.inf) == 3.5
    assert math.isclose(lp_x_norm(np.ones(8), xg, 2), math.sqrt(2.0))


def test_x_derivative_modes():
    xg = SpatialGrid(1, 32, 3.0)
    k = 2 * math.pi / 3.0
    x = xg.x[0]
    d = x_derivative(np.sin(k * x), xg, (1,))
    assert np.max(np.abs(d - k * np.cos(k * x))) <= 1e-12 * k
    assert np.max(np.abs(x_derivative(np.full(32, 2.0), xg, (1,)))) < 1e-12
    d2 = x_derivative(np.sin(3 * k * x), xg, (2,))
    assert np.allclose(d2, -(3 * k) ** 2 * np.sin(3 * k * x), atol=1e-10)
    with pytest.raises(GridError):
        x_derivative(x, xg, (3,), max_order=2)


def test_x_derivatives_commute(rng):
    xg = SpatialGrid(2, 16, 2 * math.pi)
    g = rng.standard_normal(xg.shape)
    a = x_derivative(x_derivative(g, xg, (1, 0)), xg, (0, 1))
    b = x_derivative(x_derivative(g, xg, (0, 1)), xg, (1, 0))
    assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(g)


def test_x_derivative_trailing_axes():
    xg = SpatialGrid(1, 16, 2 * math.pi)
    f = np.sin(xg.x[0])[:, None] * np.arange(3.0)[None]
    d = x_derivative(f, xg, (1,))
    assert np.allclose(d, np.cos(xg.x[0])[:, None] * np.arange(3.0)[None])


def test_v_derivative_exact_and_order():
    g = build_velocity_grid(8, 4.0)
    d = v_derivative(g.v[0], g, (1, 0, 0))
    assert np.allclose(d[1:-1], 1.0, atol=1e-12)
    assert np.allclose(v_derivative(np.ones(g.shape), g, (1, 0, 0))[1:-1], 0.0)
    l2, sup = {}, {}
    for n in (16, 32, 64):
        gr = build_velocity_grid(n, 6.0)
        e = np.abs(v_derivative(gr.sqrt_mu, gr, (1, 0, 0)) + gr.v[0] * gr.sqrt_mu)[1:-1]
        l2[n] = math.sqrt(gr.cell_weight * np.sum(e ** 2))
        sup[n] = e.max()
    # node sets do not nest, so the sampled sup on 16^3 misses the peak; the
    # quadrature error is the grid-independent measure on the coarse pair
    assert math.log2(l2[16] / l2[32]) >= 1.8
    assert math.log2(sup[32] / sup[64]) >= 1.8


def test_multi_indices_count():
    assert len(list(multi_indices(2, 1))) == 15
    assert len(list(multi_indices(2, 1, velocity=False))) == 3
    assert all(mi.order <= 3 for mi in multi_indices(3, 2))


def test_phase_field_roundtrip(rng):
    v = rng.standard_normal((2, 4, 2, 2, 2))
    pf = PhaseField(v, "pm")
    assert np.allclose(pf.as_sd().as_pm().values, v)
    assert np.allclose(pf.as_sd().values[0], v[0] + v[1])
    with pytest.raises(GridError):
        PhaseField(np.zeros((3, 2, 2, 2)))
    with pytest.raises(GridError):
        PhaseField(np.full((2, 2, 2, 2), np.nan))


def test_neg_sobolev_single_and_two_modes():
    xg = SpatialGrid(1, 64, 2 * math.pi)
    x = xg.x[0]
    s = 0.5
    one = neg_sobolev_norm(2.0 * np.cos(3 * x), xg, s)
    assert math.isclose(one, 2.0 * 3 ** -s * math.sqrt(math.pi), rel_tol=1e-12)
    two = neg_sobolev_norm(2.0 * np.cos(3 * x) + np.sin(5 * x), xg, s)
    other = neg_sobolev_norm(np.sin(5 * x), xg, s)
    assert math.isclose(two, math.hypot(one, other), rel_tol=1e-12)
    assert neg_sobolev_norm(0 * x, xg, s) == 0
    for bad in (0.0, 1.5, -1):
        with pytest.raises(GridError):
            neg_sobolev_norm(x, xg, bad)
