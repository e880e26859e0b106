import numpy as np
import pytest

from conftest import cylinder_cloud
from skeletree.errors import EmptyCloud, NoRoot
from skeletree.gsa import GsaParams, extract_gsa
from skeletree.io_formats import PointCloud
from skeletree.skeleton_graph import component_labels
from skeletree.synth import TreeSpec, generate


def is_forest(g):
    # acyclic iff edges == nodes - components
    comps = component_labels(g.n_nodes, g.edges).max() + 1
    return len(g.edges) == g.n_nodes - comps


def test_cylinder_is_z_ordered_chain():
    g = extract_gsa(cylinder_cloud(height=2.0, n=20000))
    assert g.n_nodes >= 8
    assert g.n_branches == 1
    deg = g.degrees()
    assert deg.max() <= 2 and (deg == 1).sum() == 2
    # walk the chain from the lowest end
    adj = g.adjacency()
    cur, prev, z = int(np.argmin(g.positions[:, 2])), -1, []
    while True:
        z.append(g.positions[cur, 2])
        nxt = [v for v in adj[cur] if v != prev]
        if not nxt:
            break
        prev, cur = cur, nxt[0]
    assert len(z) == g.n_nodes
    assert np.all(np.diff(z) > 0)


def test_only_rooted_cluster_yields_nodes():
    low = cylinder_cloud(height=1.0, n=8000, seed=1)
    high = cylinder_cloud(height=1.0, n=8000, seed=2, center=(5.0, 0.0))
    xyz = np.vstack([low.xyz, high.xyz + [0, 0, 0.5]])
    g = extract_gsa(PointCloud(xyz, np.ones(len(xyz))))
    assert g.n_nodes > 0
    assert np.all(g.positions[:, 0] < 1.0)


def test_forked_tree_has_one_branching_node():
    cloud, truth = generate(TreeSpec(depth=1, leaf_fraction=0.0, points_per_m2=8000, seed=1))
    assert len(truth.segments) == 3
    g = extract_gsa(cloud)
    deg = g.degrees()
    assert (deg == 3).sum() == 1
    assert deg.max() == 3
    assert is_forest(g) and g.n_branches == 1


def test_output_is_acyclic_on_leafy_tree(small_tree):
    cloud, _ = small_tree
    g = extract_gsa(cloud)
    assert is_forest(g)
    assert g.n_branches == 1


def test_node_count_tracks_bin_width():
    c = cylinder_cloud(height=2.0, n=20000)
    coarse = extract_gsa(c, GsaParams(bin_width=0.4)).n_nodes
    fine = extract_gsa(c, GsaParams(bin_width=0.1)).n_nodes
    assert fine > coarse


def test_deterministic():
    c = cylinder_cloud(n=5000, seed=4)
    a, b = extract_gsa(c), extract_gsa(c)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert a.edges == b.edges


def test_empty_cloud():
    with pytest.raises(EmptyCloud):
        extract_gsa(PointCloud(np.zeros((0, 3)), np.zeros(0)))


def test_bad_root_quantile():
    with pytest.raises(NoRoot):
        extract_gsa(cylinder_cloud(n=100), GsaParams(root_quantile=0.0))


@pytest.mark.parametrize("kw", [{"knn": 1}, {"bin_width": 0}, {"min_cluster_points": 0}, {"spur_ratio": 1.0}])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        GsaParams(**kw)
