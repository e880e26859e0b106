import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from conftest import adjacency_edges, fg_components
from skeletree.errors import EmptyGrid, EmptyInput
from skeletree.io_formats import PointCloud
from skeletree.skeleton_graph import (
    Branch, SkeletonGraph, barycenter, branches_sorted, build_raw_skeleton, find_breakpoints,
)
from skeletree.thinning import BinaryGrid, thin
from skeletree.voxel_grid import build_grid


def voxel_cloud(voxels, n, per_voxel=4, seed=0):
    """Points inside each voxel of an n-cube spanning [0, n]^3, plus the two corners."""
    rng = np.random.default_rng(seed)
    pts = [np.array([[0, 0, 0], [n, n, n]], float)]
    for v in voxels:
        pts.append(np.asarray(v, float) + rng.uniform(0.05, 0.95, (per_voxel, 3)))
    return PointCloud(np.vstack(pts))


def raw(voxels, n=10):
    cloud = voxel_cloud(voxels, n)
    grid = build_grid(cloud, n)
    return build_raw_skeleton(BinaryGrid(n, set(voxels)), grid, cloud), grid


def test_barycenter():
    np.testing.assert_array_equal(barycenter([(0, 0, 0), (2, 0, 0)]), [1, 0, 0])
    np.testing.assert_array_equal(barycenter([(1.5, -2, 3)]), [1.5, -2, 3])
    pts = np.random.default_rng(0).random((1000, 3))
    assert np.all(np.abs(barycenter(pts) - 0.5) < 0.05)
    with pytest.raises(EmptyInput):
        barycenter([])


def test_face_adjacent_pair():
    g, _ = raw([(3, 3, 3), (3, 3, 4)])
    assert g.n_nodes == 2 and g.edges == {(0, 1)} and g.n_branches == 1


def test_gap_voxel_splits_branches():
    g, _ = raw([(3, 3, 3), (3, 3, 5)])
    assert g.n_nodes == 2 and not g.edges and g.n_branches == 2


def test_l_shaped_path():
    vox = [(2, 2, 2), (3, 2, 2), (4, 2, 2), (4, 3, 2), (4, 4, 2)]
    g, _ = raw(vox)
    # the two voxels flanking the corner are diagonal neighbors, so 4 + 1 edges
    assert g.n_nodes == 5 and g.n_branches == 1
    assert g.edges == adjacency_edges(sorted(vox))
    assert len(g.edges) == 5


def test_node_positions_are_barycenters_inside_voxels():
    vox = [(1, 1, 1), (2, 2, 2), (5, 5, 5)]
    cloud = voxel_cloud(vox, 10, per_voxel=7, seed=3)
    grid = build_grid(cloud, 10)
    g = build_raw_skeleton(BinaryGrid(10, set(vox)), grid, cloud)
    for i, v in enumerate(sorted(vox)):
        cell = grid.occupancy[v]
        np.testing.assert_allclose(g.positions[i], cloud.xyz[cell.point_indices].mean(axis=0))
        lo, hi = grid.voxel_bounds(v)
        assert np.all(g.positions[i] >= lo) and np.all(g.positions[i] <= hi)
        assert g.node(i).source_point_count == 7
        assert g.node(i).voxel == v


def test_empty_thinned_voxel_rejected_unless_allowed():
    cloud = voxel_cloud([(2, 2, 2), (2, 2, 4)], 10)
    grid = build_grid(cloud, 10)
    fg = BinaryGrid(10, {(2, 2, 2), (2, 2, 3), (2, 2, 4)})
    with pytest.raises(EmptyGrid):
        build_raw_skeleton(fg, grid, cloud)
    g = build_raw_skeleton(fg, grid, cloud, allow_empty=True)
    lo, hi = grid.voxel_bounds((2, 2, 3))
    assert np.all(g.positions[1] >= lo) and np.all(g.positions[1] <= hi)
    assert g.n_branches == 1


def test_empty_input():
    cloud = voxel_cloud([], 4)
    with pytest.raises(EmptyGrid):
        build_raw_skeleton(BinaryGrid(4), build_grid(cloud, 4), cloud)


def flood_labels(n, edges):
    if not edges:
        return n
    e = np.array(sorted(edges))
    m = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return connected_components(m, directed=False)[0]


def test_random_thinned_grids_match_oracle():
    rng = np.random.default_rng(4)
    for _ in range(15):
        n = int(rng.integers(4, 12))
        arr = rng.random((n, n, n)) < rng.uniform(0.1, 0.5)
        th = thin(BinaryGrid.from_array(arr))
        vox = sorted(th.foreground)
        cloud = voxel_cloud(vox, n, per_voxel=2)
        g = build_raw_skeleton(th, build_grid(cloud, n), cloud)
        assert g.n_nodes == len(vox)
        assert g.edges == adjacency_edges(vox)
        assert g.n_branches == flood_labels(g.n_nodes, g.edges) == fg_components(th.to_array())


def test_graph_rejects_self_loops_and_dedupes():
    with pytest.raises(ValueError):
        SkeletonGraph(np.zeros((2, 3)), {(1, 1)})
    g = SkeletonGraph(np.zeros((3, 3)), {(1, 0), (0, 1)})
    assert g.edges == {(0, 1)}
    assert not g.add_edge(1, 0) and not g.add_edge(2, 2) and g.add_edge(2, 1)


def graph_of_sizes(sizes, zs):
    pos, edges, start = [], set(), 0
    for size, z in zip(sizes, zs):
        for k in range(size):
            pos.append([start, 0.0, z + k])
            if k:
                edges.add((start + k - 1, start + k))
        start += size
    for k, p in enumerate(pos):
        p[0] = k
    return SkeletonGraph(np.array(pos, float), edges)


def test_branches_sorted():
    g = graph_of_sizes([10, 3, 7], [0, 0, 0])
    assert [b.node_count for b in branches_sorted(g)] == [10, 7, 3]
    assert len(branches_sorted(graph_of_sizes([4], [0]))) == 1
    g = graph_of_sizes([5, 5], [2.0, 1.0])
    first = branches_sorted(g)[0]
    assert g.positions[first.min_z_node, 2] == 1.0


def test_find_breakpoints():
    g = graph_of_sizes([5], [0])
    b = g.branches()[0]
    assert find_breakpoints(g, b) == [0, 4]
    iso = SkeletonGraph(np.zeros((1, 3)))
    assert find_breakpoints(iso, iso.branches()[0]) == [0]
    # Y: stem 0-1-2, arms 2-3, 2-4
    y = SkeletonGraph(np.array([[0, 0, 0], [0, 0, 1], [0, 0, 2], [1, 0, 3], [-1, 0, 3.5]], float),
                      {(0, 1), (1, 2), (2, 3), (2, 4)})
    assert find_breakpoints(y, y.branches()[0]) == [0, 3, 4]


def test_branch_record():
    g = graph_of_sizes([3, 2], [5, 1])
    assert g.branches()[1] == Branch(1, [3, 4], 3, 2)
