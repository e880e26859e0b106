
import numpy as np
import pytest
from scipy import ndimage

from skeletree.io_formats import PointCloud
from skeletree.skeleton_graph import SkeletonGraph
from skeletree.synth import TreeSpec, generate

STRUCT26 = np.ones((3, 3, 3), dtype=bool)
STRUCT6 = ndimage.generate_binary_structure(3, 1)


def fg_components(arr) -> int:
    """26-connected foreground component count (flood-fill oracle)."""
    return int(ndimage.label(np.asarray(arr, bool), structure=STRUCT26)[1])


def bg_components(arr) -> int:
    """6-connected background components, exterior included, on a padded copy."""
    padded = np.pad(~np.asarray(arr, bool), 1, constant_values=True)
    return int(ndimage.label(padded, structure=STRUCT6)[1])


def adjacency_edges(voxels) -> set[tuple[int, int]]:
    """All-pairs 26-adjacency oracle over a sorted voxel list."""
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    cheb = np.abs(v[:, None, :] - v[None, :, :]).max(axis=2)
    i, j = np.nonzero(np.triu(cheb == 1))
    return set(zip(i.tolist(), j.tolist()))


def chain(points) -> SkeletonGraph:
    pts = np.asarray(points, dtype=float)
    return SkeletonGraph(pts, {(i, i + 1) for i in range(len(pts) - 1)})


def cylinder_cloud(radius=0.2, height=2.0, n=20000, seed=0, center=(0.0, 0.0)) -> PointCloud:
    rng = np.random.default_rng(seed)
    th = rng.uniform(0, 2 * np.pi, n)
    z = rng.uniform(0, height, n)
    xyz = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th), z])
    return PointCloud(xyz, np.full(n, 100.0))


@pytest.fixture(scope="session")
def small_tree():
    """A depth-2 tree of about 150k points with leaves."""
    return generate(TreeSpec(depth=2, points_per_m2=8000, seed=3))


@pytest.fixture(scope="session")
def bare_trunk():
    return generate(TreeSpec(depth=0, leaf_fraction=0.0, points_per_m2=8000, seed=0))
