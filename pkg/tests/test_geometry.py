import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracext.errors import ArgumentError
from fracext.geometry import (
    GEOMETRY_TOL,
    bump,
    capacity_phi,
    capacity_slope_constant,
    poincare_audit,
    regular_mask,
    symmetry_fit,
    tangential_gradient_norm,
    total_curvature,
)
from fracext.grid import GridFunction, HalfSpaceGrid
from fracext.weights import PowerLaw


def slice_grid(N=301, L=6.0):
    # closed axes symmetric about 0, spacing 0.02
    return HalfSpaceGrid(2, L, N, 1.0, 8, 1.0, (False, False))


def field(grid, fn):
    y1, y2, x = grid.mesh
    return GridFunction(grid, fn(y1, y2, x))


def interior(grid, margin=2):
    m = np.zeros(grid.boundary_shape, bool)
    m[margin:-margin, margin:-margin] = True
    return m


def oracle_points(grid, rmin, rmax, count=10, seed=5):
    r = np.random.default_rng(seed)
    y = grid.y_nodes(0)
    pts = []
    while len(pts) < count:
        i, j = r.integers(0, len(y), 2)
        rad = math.hypot(y[i], y[j])
        if rmin <= rad <= rmax and min(abs(y[i]), abs(y[j])) > 0.2:
            pts.append((i, j))
    return pts


def test_planar_level_sets_have_no_curvature():
    g = slice_grid()
    u = field(g, lambda a, b, x: 0.6 * a + 0.8 * b)
    K = total_curvature(u, 0)
    assert np.max(K) < 1e-8
    assert np.max(tangential_gradient_norm(u, 0)) < 1e-8


def test_circles_have_curvature_one_over_r():
    g = slice_grid()
    u = field(g, lambda a, b, x: a**2 + b**2)
    K = total_curvature(u, 0)
    y1, y2 = np.meshgrid(g.y_nodes(0), g.y_nodes(1), indexing="ij")
    r = np.hypot(y1, y2)
    sel = (r >= 1) & (r <= 2)
    assert np.max(np.abs(K[sel] * r[sel] - 1)) < 2e-2
    # |grad u| = 2r is constant on circles
    assert np.max(tangential_gradient_norm(u, 0)[sel]) < 1e-8


def test_hyperbola_curvature_oracle():
    g = slice_grid()
    u = field(g, lambda a, b, x: a**2 - b**2)
    K = total_curvature(u, 0)
    y = g.y_nodes(0)
    for i, j in oracle_points(g, 1.0, 2.5):
        a, b = y[i], y[j]
        # (u11 u2^2 - 2 u12 u1 u2 + u22 u1^2) / |grad u|^3
        kappa = (2 * 4 * b**2 - 2 * 4 * a**2) / (8 * math.hypot(a, b) ** 3)
        assert K[i, j] == pytest.approx(abs(kappa), rel=2e-2)


def test_ellipse_tangential_oracle():
    g = slice_grid()
    u = field(g, lambda a, b, x: a**2 + 4 * b**2)
    T = tangential_gradient_norm(u, 0)
    y = g.y_nodes(0)
    for i, j in oracle_points(g, 0.5, 2.5):
        a, b = y[i], y[j]
        exact = abs(96 * a * b / (4 * a**2 + 64 * b**2))
        assert T[i, j] == pytest.approx(exact, rel=2e-2)
    assert np.max(T) > 0.1


def test_axis_aligned_profile_has_zero_tangential_part():
    g = slice_grid()
    u = field(g, lambda a, b, x: np.tanh(2 * a) * np.exp(-x))
    assert np.max(tangential_gradient_norm(u, 3)) < 1e-8
    assert np.max(total_curvature(u, 3)) < 1e-8


def test_oblique_profile_converges_at_second_order():
    def worst(N):
        g = slice_grid(N)
        u = field(g, lambda a, b, x: np.tanh((3 * a + 4 * b) / 5))
        return float(np.max(total_curvature(u, 0)[interior(g)]))

    assert math.log2(worst(151) / worst(301)) >= 1.8


def test_one_dimensional_slices_carry_zero_curvature():
    g = HalfSpaceGrid(1, 6.0, 64, 2.0, 8)
    u = GridFunction(g, np.sin(g.mesh[0]))
    assert np.all(total_curvature(u, 0) == 0)
    assert np.all(tangential_gradient_norm(u, 0) == 0)


def test_mask_monotone_and_empty():
    g = slice_grid(101)
    u = field(g, lambda a, b, x: a**2 + b**2)
    small = regular_mask(u, 0, 1e-3).mask
    large = regular_mask(u, 0, 1.0).mask
    assert np.all(large <= small) and large.sum() < small.sum()
    const = field(g, lambda a, b, x: np.ones_like(a))
    m = regular_mask(const, 0)
    assert m.empty
    assert np.all(total_curvature(const, 0, m) == 0)
    with pytest.raises(ArgumentError):
        regular_mask(u, 0, -1.0)


def test_rotation_equivariance():
    g = slice_grid(101)
    u = field(g, lambda a, b, x: a**2 + 4 * b**2 + 0.3 * a * b**2)
    rot = GridFunction(g, np.rot90(u.values, 1, axes=(0, 1)).copy())
    for op in (total_curvature, tangential_gradient_norm):
        assert np.allclose(np.rot90(op(u, 0)), op(rot, 0), rtol=0, atol=1e-10)


def test_scaling_invariance():
    g = HalfSpaceGrid(2, 20.0, 64, 10.0, 16, 2.0, (False, False))
    u = field(g, lambda a, b, x: np.tanh(a + 0.3 * b**2 / (1 + x)))
    two = GridFunction(g, 2 * u.values)
    m = regular_mask(u, 0)
    assert np.max(np.abs(total_curvature(u, 0, m) - total_curvature(two, 0, m))) < 1e-10
    phi = bump(8.0, g)
    w = PowerLaw(0.0)
    a, b = poincare_audit(u, w, phi), poincare_audit(two, w, phi)
    for key in ("lhs_curv", "lhs_tan", "rhs"):
        assert getattr(b, key) == pytest.approx(4 * getattr(a, key), rel=1e-10)


def test_capacity_branches_meet():
    # nodes sit exactly at |X| = 2 = sqrt(R) and |X| = 4 = R
    g = HalfSpaceGrid(1, 16.0, 33, 8.0, 16, 1.0, (False,))
    phi = capacity_phi(4.0, g).values
    y, x = g.mesh
    at_inner = np.isclose(np.hypot(y, x), 2.0, atol=1e-12)
    at_outer = np.isclose(np.hypot(y, x), 4.0, atol=1e-12)
    assert at_inner.any() and at_outer.any()
    assert np.allclose(phi[at_inner], math.log(4.0), atol=1e-14)
    assert np.all(phi[at_outer] == 0.0)
    r = np.hypot(y, x)
    mid = (r > 2) & (r < 4)
    assert np.allclose(phi[mid], 2 * np.log(4 / r[mid]))


@pytest.mark.parametrize("R", [4.0, 8.0, 16.0])
def test_capacity_slope_constant(R):
    g = HalfSpaceGrid(1, 40.0, 256, 20.0, 128, 1.0)
    c = capacity_slope_constant(R, g)
    assert 1.5 < c <= 2 + 1e-6


def test_capacity_and_bump_radius_checks():
    g = HalfSpaceGrid(1, 40.0, 64, 20.0, 32)
    with pytest.raises(ArgumentError):
        capacity_phi(3.0, g)
    with pytest.raises(ArgumentError):
        capacity_phi(25.0, g)
    with pytest.raises(ArgumentError):
        bump(30.0, g)
    b = bump(8.0, g).values
    assert b.max() <= 1 and b.min() == 0


def layer_2d():
    g = HalfSpaceGrid(2, 40.0, 64, 20.0, 32, 2.0, (False, True))
    return g, field(g, lambda a, b, x: 2 / math.pi * np.arctan(a / (1 + x)))


def test_flat_layer_budget():
    g, u = layer_2d()
    for phi in (capacity_phi(8.0, g), bump(16.0, g)):
        b = poincare_audit(u, PowerLaw(0.0), phi)
        assert b.lhs_curv < 1e-8 * b.rhs and b.lhs_tan < 1e-8 * b.rhs
        assert b.holds and b.sensitivity < 1e-2
        assert set(b.to_dict()) >= {"lhs_curv", "lhs_tan", "rhs", "holds", "slack", "eps_grad", "sensitivity"}


def test_saddle_budget_is_reported():
    g = HalfSpaceGrid(2, 40.0, 64, 20.0, 32, 1.0, (False, False))
    u = field(g, lambda a, b, x: a**2 - b**2)
    b = poincare_audit(u, PowerLaw(0.0), capacity_phi(4.0, g))
    assert b.lhs_curv > 0 and b.rhs > 0
    assert b.slack == pytest.approx(b.rhs - b.lhs_curv - b.lhs_tan)
    assert b.holds == (b.slack >= -GEOMETRY_TOL * b.rhs)


def test_audit_requires_compact_support():
    g, u = layer_2d()
    with pytest.raises(ArgumentError):
        poincare_audit(u, PowerLaw(0.0), GridFunction(g, np.ones(g.shape)))
    other = HalfSpaceGrid(2, 40.0, 32, 20.0, 32, 2.0, (False, True))
    with pytest.raises(ArgumentError):
        poincare_audit(u, PowerLaw(0.0), bump(8.0, other))


def test_symmetry_axis_aligned_profile():
    g = HalfSpaceGrid(2, 20.0, 64, 5.0, 16, 1.0, (False, True))
    fit = symmetry_fit(field(g, lambda a, b, x: np.tanh(a) * np.exp(-x)))
    assert np.allclose(fit.omega, [1.0, 0.0], atol=1e-12)
    assert fit.residual < 1e-6 and fit.profile_rms < 1e-12


def test_symmetry_oblique_direction_recovered():
    g = HalfSpaceGrid(2, 20.0, 128, 5.0, 16, 1.0, (False, False))
    fit = symmetry_fit(field(g, lambda a, b, x: np.tanh((3 * a + 4 * b) / 5) * np.exp(-x)))
    angle = math.acos(min(1.0, abs(float(fit.omega @ np.array([0.6, 0.8])))))
    assert angle < 1e-3
    assert fit.residual < 1e-2


def test_symmetry_of_saddle_and_constant():
    g = HalfSpaceGrid(2, 20.0, 64, 5.0, 16, 1.0, (False, False))
    fit = symmetry_fit(field(g, lambda a, b, x: a**2 - b**2))
    assert fit.residual >= 0.5
    assert fit.residual == pytest.approx(1 / math.sqrt(2), abs=2e-2)
    const = symmetry_fit(field(g, lambda a, b, x: np.full_like(a, 3.0)))
    assert const.omega is None and const.residual == 0.0
    assert const.to_dict()["omega_status"] == "undefined"
    with pytest.raises(ArgumentError):
        symmetry_fit(GridFunction(HalfSpaceGrid(1, 4.0, 16, 2.0, 8), np.zeros((16, 9))))


@settings(max_examples=20)
@given(a=st.floats(0.1, 10) | st.floats(-10, -0.1), b=st.floats(-10, 10))
def test_symmetry_residual_affine_invariant(a, b):
    g = HalfSpaceGrid(2, 20.0, 32, 5.0, 8, 1.0, (False, True))
    u = field(g, lambda y1, y2, x: np.tanh(y1) + 0.2 * np.sin(2 * np.pi * y2 / 20) * np.exp(-x))
    ref = symmetry_fit(u).residual
    assert abs(symmetry_fit(GridFunction(g, a * u.values + b)).residual - ref) < 1e-10
