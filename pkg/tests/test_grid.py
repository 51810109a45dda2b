import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from chdbc.grid import GridSpec, grad_sq, pair_h1_norm, surface_grad_sq, trace


def test_geometry_invariants():
    g = GridSpec(3.0, 2.0, 8, 5)
    assert g.dx == pytest.approx(3.0 / 8)
    assert g.dy == pytest.approx(0.5)
    assert g.area == pytest.approx(6.0)
    assert g.boundary_length == pytest.approx(6.0)
    assert g.shape == (8, 5)
    assert g.weights.sum() == pytest.approx(g.area)


@pytest.mark.parametrize("args", [(1.0, 1.0, 6, 2), (1.0, 1.0, 5, 5), (1.0, 1.0, 2, 5),
                                  (0.0, 1.0, 8, 5), (1.0, -1.0, 8, 5)])
def test_invalid_grids_rejected(args):
    with pytest.raises(ValueError):
        GridSpec(*args)


def test_shape_mismatch_is_an_error(small_grid):
    with pytest.raises(ValueError):
        small_grid.mean(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        small_grid.boundary_integral(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        small_grid.inner_flux(np.zeros((2, 16, 9)), np.zeros((2, 16, 8)))


def test_mean_examples():
    g = GridSpec(1.5, 2.0, 16, 9)
    x, y = g.coords()
    assert g.mean(np.full(g.shape, 2.5)) == pytest.approx(2.5, abs=1e-15)
    assert abs(g.mean(np.cos(2 * np.pi * x / g.Lx))) < 1e-15
    assert g.mean(y) == pytest.approx(1.0, abs=1e-14)


def test_quadrature_matches_scipy_trapezoid(small_grid, rng):
    u = rng.standard_normal(small_grid.shape)
    y = np.arange(small_grid.ny) * small_grid.dy
    oracle = small_grid.dx * np.sum(trapezoid(u, y, axis=1))
    assert small_grid.integral(u) == pytest.approx(oracle, rel=1e-13)


def test_inner_product_examples():
    g = GridSpec(1.0, 2.0, 16, 9)
    x, _ = g.coords()
    one = np.ones(g.shape)
    assert g.inner_l2(one, one) == pytest.approx(2.0)
    assert g.norm_l2(np.zeros(g.shape)) == 0.0
    assert abs(g.inner_l2(np.cos(2 * np.pi * x), np.sin(2 * np.pi * x))) < 1e-14


def test_boundary_integral_examples():
    g = GridSpec(3.0, 1.0, 12, 5)
    xb = g.x()
    assert g.boundary_integral(np.ones((2, g.nx))) == pytest.approx(6.0)
    assert abs(g.boundary_integral(np.stack([np.cos(2 * np.pi * xb / 3.0)] * 2))) < 1e-14
    assert g.boundary_integral(np.full((2, g.nx), -1.7)) == pytest.approx(-1.7 * g.boundary_length)
    assert g.inner_gamma(np.ones((2, g.nx)), np.ones((2, g.nx))) == pytest.approx(6.0)


def test_pair_h1_examples():
    g = GridSpec(2.0, 1.5, 16, 7)
    assert pair_h1_norm(g, np.zeros(g.shape), np.zeros((2, g.nx))) == 0.0
    one = np.ones(g.shape)
    assert pair_h1_norm(g, one, trace(one)) == pytest.approx(math.sqrt(g.area + g.boundary_length))


@pytest.mark.parametrize("nx", [16, 32, 64])
def test_pair_h1_cosine_second_order(nx):
    g = GridSpec(1.0, 1.0, nx, 9)
    x, _ = g.coords()
    chi = np.cos(2 * np.pi * x)
    val = pair_h1_norm(g, chi, trace(chi)) ** 2
    # bulk (1 + 4 pi^2) |Omega|/2 plus boundary (1 + 4 pi^2) |Gamma|/2
    exact = (1 + 4 * np.pi**2) * (0.5 + 1.0)
    assert abs(val - exact) / exact < 4.0 / nx**2


def test_pair_h1_checks_trace(small_grid, rng):
    chi = rng.standard_normal(small_grid.shape)
    with pytest.raises(ValueError):
        pair_h1_norm(small_grid, chi, trace(chi) + 1.0)
    pair_h1_norm(small_grid, chi, trace(chi) + 1.0, trace_tol=None)


def test_grad_sq_matches_stiffness_form(small_grid, rng):
    """Independent assembly of the ghost-closed stiffness matrix."""
    g = small_grid
    u = rng.standard_normal(g.shape)
    Dx = (np.roll(np.eye(g.nx), 1, axis=1) - np.eye(g.nx)) / g.dx
    Dy = (np.eye(g.ny, k=1) - np.eye(g.ny))[:-1] / g.dy
    wy = np.full(g.ny, g.dy)
    wy[[0, -1]] *= 0.5
    Kx = g.dx * np.kron(Dx.T @ Dx, np.diag(wy))
    Ky = g.dx * g.dy * np.kron(np.eye(g.nx), Dy.T @ Dy)
    val = u.ravel() @ (Kx + Ky) @ u.ravel()
    assert grad_sq(g, u) == pytest.approx(val, rel=1e-12)


def test_surface_grad_of_constant_vanishes(small_grid):
    assert surface_grad_sq(small_grid, np.full((2, small_grid.nx), 3.0)) == 0.0


# magnitudes below ~1e-150 underflow when squared inside a norm
finite = st.one_of(st.just(0.0), st.floats(1e-6, 1e3), st.floats(-1e3, -1e-6))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), finite, finite)
def test_bilinearity_symmetry_homogeneity(seed, a, b):
    g = GridSpec(2.0, 1.0, 8, 5)
    r = np.random.default_rng(seed)
    u, v, w = r.standard_normal((3,) + g.shape)
    lhs = g.inner_l2(a * u + b * v, w)
    rhs = a * g.inner_l2(u, w) + b * g.inner_l2(v, w)
    scale = (abs(a) + abs(b) + 1) * g.norm_l2(w) * (g.norm_l2(u) + g.norm_l2(v))
    assert abs(lhs - rhs) <= 1e-12 * scale
    assert g.inner_l2(u, w) == pytest.approx(g.inner_l2(w, u), rel=1e-12, abs=1e-300)
    assert g.norm_l2(a * u) == pytest.approx(abs(a) * g.norm_l2(u), rel=1e-12, abs=1e-300)
    b1, b2 = r.standard_normal((2, 2, g.nx))
    assert g.inner_gamma(b1, b2) == pytest.approx(g.inner_gamma(b2, b1), rel=1e-12)
    assert g.norm_gamma(a * b1) == pytest.approx(abs(a) * g.norm_gamma(b1), rel=1e-12, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mean_of_centered_field_vanishes(seed):
    g = GridSpec(1.7, 0.9, 12, 7)
    u = 10 * np.random.default_rng(seed).standard_normal(g.shape)
    assert abs(g.mean(u - g.mean(u))) < 1e-14


def test_constant_quadrature_exact():
    g = GridSpec(math.e, math.pi, 10, 11)
    for c in (0.0, 1.0, -3.25, 1e6):
        assert g.mean(np.full(g.shape, c)) == pytest.approx(c, rel=1e-14, abs=0)
        assert g.boundary_integral(np.full((2, g.nx), c)) == pytest.approx(c * g.boundary_length, rel=1e-14)
