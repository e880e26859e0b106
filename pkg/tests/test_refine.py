import numpy as np
import pytest

from conftest import chain, cylinder_cloud
from skeletree.errors import DegenerateFit, EmptySlice, NotAnEllipse
from skeletree.refine import (
    bending_energy, fit_circle, fit_ellipse, laplacian_smooth, plane_basis, recenter_nodes, slice_points,
)
from skeletree.skeleton_graph import SkeletonGraph


def ellipse_points(cx, cy, a, b, n=40, phi=0.0):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    x, y = a * np.cos(t), b * np.sin(t)
    c, s = np.cos(phi), np.sin(phi)
    return np.column_stack([cx + c * x - s * y, cy + s * x + c * y])


def test_plane_basis_orthonormal():
    for t in np.random.default_rng(0).normal(size=(50, 3)):
        t /= np.linalg.norm(t)
        u, v = plane_basis(t)
        m = np.stack([t, u, v])
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)


def test_slice_of_cylinder_is_a_ring():
    cloud = cylinder_cloud(0.2, 2.0)
    flat = slice_points(cloud.xyz, (0, 0, 1.0), (0, 0, 1), 0.05, 0.6)
    assert len(flat) > 100
    np.testing.assert_allclose(np.linalg.norm(flat, axis=1), 0.2, atol=1e-12)


def test_slice_preconditions():
    cloud = cylinder_cloud()
    with pytest.raises(ValueError):
        slice_points(cloud.xyz, (0, 0, 1), (0, 0, 1), 0.0, 0.6)
    with pytest.raises(ValueError):
        slice_points(cloud.xyz, (0, 0, 1), (0, 0, 2), 0.1, 0.6)
    with pytest.raises(EmptySlice):
        slice_points(cloud.xyz, (0, 0, 50), (0, 0, 1), 0.1, 0.6)


def test_slice_lateral_radius_isolates_branch():
    a = cylinder_cloud(0.1, 2.0, seed=1)
    b = cylinder_cloud(0.1, 2.0, seed=2, center=(2.0, 0.0))
    xyz = np.vstack([a.xyz, b.xyz])
    flat = slice_points(xyz, (0, 0, 1), (0, 0, 1), 0.1, 0.5)
    assert np.all(np.linalg.norm(flat, axis=1) < 0.5)


def test_circle_exact_recovery():
    fit = fit_circle(ellipse_points(0, 0, 1, 1, n=8))
    np.testing.assert_allclose(fit.center, [0, 0], atol=1e-9)
    assert fit.radius_or_axes == pytest.approx(1, abs=1e-9) and fit.rms_residual < 1e-9
    fit = fit_circle([(1, 0), (0, 1), (-1, 0)])
    np.testing.assert_allclose(fit.center, [0, 0], atol=1e-12)
    assert fit.radius_or_axes == pytest.approx(1)
    fit = fit_circle(ellipse_points(1234.5, -987.25, 0.07, 0.07, n=12))
    np.testing.assert_allclose(fit.center, [1234.5, -987.25], atol=1e-6)


def test_circle_noisy():
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 2 * np.pi, 100)
    pts = np.column_stack([0.3 + 0.5 * np.cos(t), -0.2 + 0.5 * np.sin(t)]) + rng.normal(0, 0.01, (100, 2))
    fit = fit_circle(pts)
    assert np.linalg.norm(fit.center - [0.3, -0.2]) < 0.01
    assert abs(fit.radius_or_axes - 0.5) < 0.01


def test_circle_degenerate():
    with pytest.raises(DegenerateFit):
        fit_circle([(0, 0), (1, 1), (2, 2)])
    with pytest.raises(DegenerateFit):
        fit_circle([(0, 0), (1, 1)])


def test_ellipse_exact_recovery():
    fit = fit_ellipse(ellipse_points(3, 4, 2, 1))
    np.testing.assert_allclose(fit.center, [3, 4], atol=1e-6)
    np.testing.assert_allclose(fit.radius_or_axes, (2, 1), atol=1e-6)
    assert fit.model == "ellipse" and fit.rms_residual < 1e-6
    rot = fit_ellipse(ellipse_points(-1, 2, 0.5, 0.2, phi=0.7))
    np.testing.assert_allclose(rot.center, [-1, 2], atol=1e-6)
    np.testing.assert_allclose(rot.radius_or_axes, (0.5, 0.2), atol=1e-6)


def test_ellipse_on_circle_agrees_with_circle():
    pts = ellipse_points(0.5, -0.5, 0.3, 0.3, n=25)
    np.testing.assert_allclose(fit_ellipse(pts).center, fit_circle(pts).center, atol=1e-6)


def test_ellipse_degenerate():
    with pytest.raises(DegenerateFit):
        fit_ellipse([(k, 2 * k) for k in range(5)])
    with pytest.raises(DegenerateFit):
        fit_ellipse([(0, 0), (1, 0), (0, 1), (1, 1)])


def test_ellipse_constraint_holds_on_hyperbolic_data():
    # the constrained fit always returns an ellipse, even for hyperbola samples
    t = np.linspace(-1.5, 1.5, 30)
    pts = np.column_stack([np.r_[np.cosh(t), -np.cosh(t)], np.r_[np.sinh(t), np.sinh(t)]])
    fit = fit_ellipse(pts)
    assert fit.model == "ellipse" and min(fit.radius_or_axes) > 0
    assert issubclass(NotAnEllipse, DegenerateFit)


def test_recenter_offset_node():
    cloud = cylinder_cloud(0.2, 2.0, n=40000)
    g = chain([(0.1, 0, 0.6), (0.1, 0, 1.0), (0.1, 0, 1.4)])
    out = recenter_nodes(g, cloud, 0.05, 0.6)
    assert np.all(np.linalg.norm(out.positions[:, :2], axis=1) < 0.01)
    np.testing.assert_allclose(out.positions[:, 2], g.positions[:, 2])


def test_recenter_keeps_empty_and_junction_nodes():
    cloud = cylinder_cloud(0.2, 2.0)
    far = chain([(5, 5, 1.0), (5, 5, 1.2)])
    assert np.array_equal(recenter_nodes(far, cloud, 0.05, 0.6).positions, far.positions)
    star = SkeletonGraph(np.array([[0.1, 0, 1.0], [0.1, 0, 1.2], [0.1, 0, 0.8], [0.3, 0, 1.0]]),
                         {(0, 1), (0, 2), (0, 3)})
    out = recenter_nodes(star, cloud, 0.05, 0.6)
    np.testing.assert_array_equal(out.positions[0], star.positions[0])


def test_recenter_moves_at_most_lateral_radius():
    rng = np.random.default_rng(5)
    cloud = cylinder_cloud(0.2, 2.0, n=10000)
    xyz = np.vstack([cloud.xyz, rng.uniform(-1, 1, (3000, 3)) + [0, 0, 1]])
    g = chain([(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), z) for z in np.linspace(0.2, 1.8, 15)])
    out = recenter_nodes(g, xyz, 0.05, 0.3)
    assert np.all(np.linalg.norm(out.positions - g.positions, axis=1) <= 0.3 + 1e-12)


def test_smooth_example():
    g = chain([(0, 0, 0), (1, 1, 0), (2, 0, 0)])
    out = laplacian_smooth(g, 0.5, 1)
    np.testing.assert_allclose(out.positions[1], [1, 0.5, 0])
    np.testing.assert_array_equal(out.positions[[0, 2]], g.positions[[0, 2]])


def test_smooth_fixed_points_and_identity():
    straight = chain([(k, 2 * k, -k) for k in range(8)])
    for lam in (0.1, 0.5, 0.9):
        np.testing.assert_allclose(laplacian_smooth(straight, lam, 10).positions, straight.positions, atol=1e-12)
    wiggly = chain(np.random.default_rng(0).normal(size=(10, 3)))
    assert np.array_equal(laplacian_smooth(wiggly, 0.0, 5).positions, wiggly.positions)
    with pytest.raises(ValueError):
        laplacian_smooth(wiggly, 1.0, 1)


def test_smooth_preserves_structure_and_junctions():
    rng = np.random.default_rng(2)
    pos = rng.normal(size=(7, 3))
    g = SkeletonGraph(pos, {(0, 1), (1, 2), (2, 3), (2, 4), (4, 5), (5, 6)})
    out = laplacian_smooth(g, 0.5, 4)
    assert out.edges == g.edges and out.n_nodes == g.n_nodes
    for fixed in (0, 2, 3, 6):
        np.testing.assert_array_equal(out.positions[fixed], pos[fixed])


def test_bending_energy_non_increasing():
    rng = np.random.default_rng(3)
    for _ in range(50):
        g = chain(rng.normal(size=(int(rng.integers(3, 20)), 3)))
        e = bending_energy(g.positions)
        for _ in range(5):
            g = laplacian_smooth(g, rng.uniform(0.05, 0.95), 1)
            e2 = bending_energy(g.positions)
            assert e2 <= e + 1e-12
            e = e2
