import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucbench.grid import (
    GAMMA_OUTER,
    S_INNER,
    InvalidGeometry,
    boundary_values,
    build_grid,
    integrate_boundary,
    integrate_volume,
    partial_derivatives,
    second_derivatives,
)

from .conftest import grid_ladder, interior_max, refinement_ratios


def test_node_count(grid):
    assert grid.shape == (65, 128)
    assert grid.size == 8320
    assert grid.nodes.shape == (2, 65, 128)


def test_nodes_inside_annulus(grid):
    rad = np.hypot(*grid.nodes)
    assert rad.min() >= 1.0 - 1e-14 and rad.max() <= 2.0 + 1e-14


@pytest.mark.parametrize(
    "args",
    [(0.0, 2.0, 33, 64), (2.0, 1.0, 33, 64), (1.0, 1.0, 33, 64), (1.0, 2.0, 7, 64), (1.0, 2.0, 33, 6), (1.0, 2.0, 33, 63)],
)
def test_invalid_geometry(args):
    with pytest.raises(InvalidGeometry):
        build_grid(*args)


@pytest.mark.parametrize("nr, nt", [(8, 8), (9, 16), (17, 32), (33, 64), (65, 128), (40, 50)])
def test_area_exact(nr, nt):
    g = build_grid(1.0, 2.0, nr, nt)
    assert abs(integrate_volume(g, np.ones(g.shape)) - 3 * math.pi) <= 1e-12 * 3 * math.pi
    assert np.all(g.weights > 0)


@pytest.mark.parametrize("nr, nt", [(8, 8), (33, 64), (64, 128)])
def test_r_squared_moment(nr, nt):
    g = build_grid(1.0, 2.0, nr, nt)
    val = integrate_volume(g, g.x1**2 + g.x2**2)
    assert abs(val - 7.5 * math.pi) <= 1e-12 * 7.5 * math.pi


def test_zero_integrand(grid):
    assert integrate_volume(grid, np.zeros(grid.shape)) == 0.0


def test_nonfinite_rejected(grid):
    f = np.ones(grid.shape)
    f[3, 4] = np.nan
    with pytest.raises(ValueError):
        integrate_volume(grid, f)


@pytest.mark.parametrize("tag, length", [(GAMMA_OUTER, 4 * math.pi), (S_INNER, 2 * math.pi)])
def test_boundary_lengths(grid, tag, length):
    assert abs(integrate_boundary(grid, tag, np.ones(grid.shape[1])) - length) <= 1e-12 * length
    assert abs(grid.boundary(tag).weights.sum() - length) <= 1e-12 * length


def test_boundary_weights_shifted_annulus():
    g = build_grid(0.5, 1.5, 33, 64)
    assert abs(g.boundary(GAMMA_OUTER).weights.sum() - 3 * math.pi) <= 1e-12


def test_cos_squared_on_gamma(grid):
    b = grid.boundary(GAMMA_OUTER)
    assert abs(integrate_boundary(grid, GAMMA_OUTER, np.cos(grid.theta) ** 2) - 2 * math.pi) <= 1e-12
    assert b.row == grid.Nr - 1


def test_boundary_normals(grid):
    for tag, sign, row in ((S_INNER, -1, 0), (GAMMA_OUTER, 1, -1)):
        b = grid.boundary(tag)
        assert np.allclose(np.hypot(*b.normals), 1.0, atol=1e-15)
        pos = grid.nodes[:, row, :]
        assert np.allclose(b.normals, sign * pos / np.hypot(*pos), atol=1e-15)


def test_boundary_values_row(grid):
    u = grid.x1 * 3.0
    assert np.array_equal(boundary_values(grid, GAMMA_OUTER, u), u[-1])
    assert np.array_equal(boundary_values(grid, S_INNER, u), u[0])


def test_radial_stencil_exact_on_radially_linear(grid):
    r = np.hypot(grid.x1, grid.x2)
    assert np.abs(grid.apply(grid.d_r, 3.0 * r - 1.0) - 3.0).max() < 1e-12
    assert np.abs(grid.apply(grid.d_r, r**2) - 2 * r).max() < 1e-11


def test_derivatives_of_linear_second_order():
    # x1 = r cos(theta): the periodic central stencil sees cos(theta), so exactness
    # holds only up to O(h_theta^2)
    errs, errs2 = [], []
    for g in grid_ladder():
        d1, d2 = partial_derivatives(g, g.x1)
        errs.append(max(np.abs(d1 - 1).max(), np.abs(d2).max()))
        errs2.append(max(interior_max(g, d) for d in second_derivatives(g, 2.0 * g.x1 - g.x2 + 1)))
    assert np.all((refinement_ratios(errs) >= 3.5) & (refinement_ratios(errs) <= 4.5))
    assert np.all((refinement_ratios(errs2) >= 3.5) & (refinement_ratios(errs2) <= 4.5))
    assert errs[-1] < 1e-3


def test_derivatives_of_constant(grid):
    for d in partial_derivatives(grid, np.full(grid.shape, 3.5)):
        assert np.abs(d).max() < 1e-12


def test_mixed_product_second_order():
    errs = []
    for g in grid_ladder():
        d1, _ = partial_derivatives(g, g.x1 * g.x2)
        errs.append(np.abs(d1 - g.x2).max())
    assert np.all((3.5 <= refinement_ratios(errs)) & (refinement_ratios(errs) <= 4.5))


def test_first_derivative_convergence():
    errs = []
    for g in grid_ladder():
        u = np.sin(g.x1) * np.cos(g.x2)
        d1, d2 = partial_derivatives(g, u)
        errs.append(max(np.abs(d1 - np.cos(g.x1) * np.cos(g.x2)).max(), np.abs(d2 + np.sin(g.x1) * np.sin(g.x2)).max()))
    ratios = refinement_ratios(errs)
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios


def test_second_derivative_x1_squared():
    errs = []
    for g in grid_ladder():
        d11, _, _ = second_derivatives(g, g.x1**2)
        errs.append(interior_max(g, d11 - 2.0))
    ratios = refinement_ratios(errs)
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios


def test_laplacian_of_r_squared():
    errs = []
    for g in grid_ladder():
        d11, d12, d22 = second_derivatives(g, g.x1**2 + g.x2**2)
        errs.append(interior_max(g, d11 + d22 - 4.0))
        assert interior_max(g, d12) < 10 * errs[-1] + 1e-10
    ratios = refinement_ratios(errs)
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios


def test_d12_symmetric(small_grid):
    g = small_grid
    diff = g.d12 - g.d12.T  # not symmetric as a matrix, but d12 = d21 as operators
    u = np.sin(g.x1 + 2 * g.x2)
    assert np.allclose(g.apply(g.d1 @ g.d2, u) + g.apply(g.d2 @ g.d1, u), 2 * g.apply(g.d12, u))
    assert diff.shape == g.d12.shape


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.integers(1, 31))
def test_periodicity_commutes(seed, shift):
    g = build_grid(1.0, 2.0, 9, 32)
    u = np.random.default_rng(seed).standard_normal(g.shape)
    for D in (g.d_theta, g.d_r):
        a = np.roll(g.apply(D, u), shift, axis=1)
        b = g.apply(D, np.roll(u, shift, axis=1))
        assert np.array_equal(a, b)


def test_refined_doubles_intervals():
    g = build_grid(1.0, 2.0, 17, 32).refined()
    assert (g.Nr, g.Ntheta) == (33, 64)


def test_volume_sum_is_reproducible(grid):
    f = np.random.default_rng(0).random(grid.shape)
    assert integrate_volume(grid, f) == integrate_volume(grid, f.copy())
