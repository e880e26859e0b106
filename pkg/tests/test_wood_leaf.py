import numpy as np
import pytest

from skeletree.errors import DegenerateInput, EmptyCloud, LengthMismatch, MissingIntensity
from skeletree.io_formats import PointCloud
from skeletree.wood_leaf import ClassLabel, FilterConfig, classify_points, filter_wood, otsu_threshold

W, L = ClassLabel.WOOD, ClassLabel.LEAF


def brute_force_otsu(values):
    """Scan all 255 bin edges and return the best between-class variance."""
    v = np.asarray(values, float)
    edges = np.linspace(v.min(), v.max(), 257)
    best = -1.0
    for t in edges[1:-1]:
        lo, hi = v[v < t], v[v >= t]
        if len(lo) == 0 or len(hi) == 0:
            continue
        var = len(lo) * len(hi) * (lo.mean() - hi.mean()) ** 2 / len(v) ** 2
        best = max(best, var)
    return best


def between_var(values, t):
    v = np.asarray(values, float)
    lo, hi = v[v < t], v[v >= t]
    return len(lo) * len(hi) * (lo.mean() - hi.mean()) ** 2 / len(v) ** 2


def test_otsu_bimodal_exact():
    t = otsu_threshold([0, 0, 0, 10, 10, 10])
    assert 0 < t < 10


def test_otsu_two_gaussians_matches_brute_force():
    rng = np.random.default_rng(0)
    a, b = rng.normal(10, 3, 500), rng.normal(50, 3, 500)
    v = np.concatenate([a, b])
    t = otsu_threshold(v)
    assert 10 < t < 50
    correct = np.sum(a < t) + np.sum(b >= t)
    assert correct / len(v) >= 0.99
    assert between_var(v, t) == pytest.approx(brute_force_otsu(v), rel=1e-12)


def test_otsu_degenerate():
    with pytest.raises(DegenerateInput):
        otsu_threshold([5, 5, 5])


def test_passthrough_labels_everything_wood(small_tree):
    cloud, _ = small_tree
    labels = classify_points(cloud, FilterConfig("passthrough"))
    assert np.all(labels == W)


def test_otsu_keeps_trunk_points(small_tree):
    cloud, truth = small_tree
    labels = classify_points(cloud, FilterConfig())
    wood = truth.labels == W
    assert np.mean(labels[wood] == W) >= 0.95
    assert np.mean(labels == truth.labels) >= 0.95


def test_missing_intensity():
    cloud = PointCloud(np.random.default_rng(0).random((10, 3)))
    with pytest.raises(MissingIntensity):
        classify_points(cloud, FilterConfig("intensity_otsu"))


def test_invert_intensity_swaps_classes():
    rng = np.random.default_rng(1)
    xyz = rng.random((200, 3))
    inten = np.r_[np.full(100, 10.0), np.full(100, 100.0)]
    cloud = PointCloud(xyz, inten)
    cfg = FilterConfig("intensity_fixed", fixed_threshold=50, density_ratio_threshold=1e-9)
    normal = classify_points(cloud, cfg)
    inv = classify_points(cloud, FilterConfig("intensity_fixed", fixed_threshold=50,
                                              density_ratio_threshold=1e-9, invert_intensity=True))
    assert np.all(normal[:100] == L) and np.all(normal[100:] == W)
    assert np.all(inv[:100] == W) and np.all(inv[100:] == L)


def test_density_only_drops_sparse_voxels():
    rng = np.random.default_rng(2)
    # ~1000 voxels holding ~40 points each, plus scattered singletons
    dense = rng.uniform(0, 0.2, (40000, 3))
    sparse = rng.uniform(-1, 1, (300, 3))
    sparse = sparse[np.any(sparse > 0.25, axis=1) | np.any(sparse < -0.05, axis=1)]
    cloud = PointCloud(np.vstack([dense, sparse]))
    labels = classify_points(cloud, FilterConfig("density_only"))
    assert np.mean(labels[:40000] == W) > 0.95  # block faces cut voxels
    assert np.all(labels[40000:] == L)


def test_classify_is_deterministic(small_tree):
    cloud, _ = small_tree
    assert np.array_equal(classify_points(cloud), classify_points(cloud))


def test_filter_wood_keeps_order():
    cloud = PointCloud(np.arange(15, dtype=float).reshape(5, 3), np.arange(5.0))
    out = filter_wood(cloud, [W, L, W, L, W])
    np.testing.assert_array_equal(out.intensity, [0, 2, 4])
    np.testing.assert_array_equal(out.xyz[:, 0], [0, 6, 12])


def test_filter_wood_errors():
    cloud = PointCloud(np.zeros((3, 3)))
    with pytest.raises(LengthMismatch):
        filter_wood(cloud, [W, W])
    with pytest.raises(EmptyCloud):
        filter_wood(cloud, [L, L, L])
    assert np.array_equal(filter_wood(cloud, [W, W, W]).xyz, cloud.xyz)


def test_bad_config():
    with pytest.raises(ValueError):
        FilterConfig("magic")
    with pytest.raises(ValueError):
        FilterConfig(density_ratio_threshold=0)
    with pytest.raises(ValueError):
        FilterConfig("intensity_fixed")
