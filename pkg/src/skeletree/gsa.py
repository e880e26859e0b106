"""Graph-search baseline skeletonizer.

Points are linked into a k-nearest-neighbor graph, geodesic distance from
the lowest points is computed with Dijkstra, and points are cut into
geodesic levels of fixed width.  Connected pieces of each level become
nodes at their centroids, and every node is linked to the closest touching
node of the level below.  Clusters of a handful of points (noise islands)
are dropped, and tip clusters much smaller than their parent (ragged ends of
open branch tips) are pruned once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from ._threads import worker_count
from .errors import EmptyCloud, NoRoot
from .skeleton_graph import SkeletonGraph

__all__ = ["GsaParams", "extract_gsa"]


@dataclass(frozen=True)
class GsaParams:
    knn: int = 8
    bin_width: float = 0.2
    root_quantile: float = 0.005
    min_cluster_points: int = 5  # smaller level clusters are noise and dropped
    spur_ratio: float = 0.25  # tip clusters below this share of their parent are pruned

    def __post_init__(self):
        if self.knn < 2:
            raise ValueError("knn must be >= 2")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.min_cluster_points < 1:
            raise ValueError("min_cluster_points must be >= 1")
        if not 0 <= self.spur_ratio < 1:
            raise ValueError("spur_ratio must lie in [0, 1)")


def extract_gsa(cloud, params: GsaParams = GsaParams()) -> SkeletonGraph:
    xyz = np.asarray(getattr(cloud, "xyz", cloud), dtype=np.float64).reshape(-1, 3)
    n = len(xyz)
    if n == 0:
        raise EmptyCloud("GSA needs at least one point")
    if not 0 < params.root_quantile <= 1:
        raise NoRoot("root_quantile must lie in (0, 1]")
    roots = np.flatnonzero(xyz[:, 2] <= np.quantile(xyz[:, 2], params.root_quantile))
    if len(roots) == 0:
        raise NoRoot("no root points selected")

    k = min(params.knn, n - 1)
    if k >= 1:
        dist, nbr = cKDTree(xyz).query(xyz, k=k + 1, workers=worker_count())
        rows = np.repeat(np.arange(n), k)
        cols = nbr[:, 1:].ravel()
        # coincident points would otherwise be an implicit non-edge
        w = dist[:, 1:].ravel() + 1e-12
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        w = np.zeros(0)
    graph = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    geo = dijkstra(graph, directed=False, indices=roots, min_only=True)

    reach = np.isfinite(geo)
    level = np.full(n, -1, dtype=np.int64)
    level[reach] = np.floor(geo[reach] / params.bin_width).astype(np.int64)

    same = reach[rows] & reach[cols] & (level[rows] == level[cols])
    intra = coo_matrix(
        (np.ones(int(same.sum())), (rows[same], cols[same])), shape=(n, n)
    ).tocsr()
    _, comp = connected_components(intra, directed=False)
    if params.min_cluster_points > 1:
        size = np.bincount(comp)
        reach &= size[comp] >= params.min_cluster_points

    # cluster ids over kept points, ordered by (level, first point)
    pts = np.flatnonzero(reach)
    key = level[pts] * (n + 1) + comp[pts]
    ukey, first, inv = np.unique(key, return_index=True, return_inverse=True)
    order = np.lexsort((pts[first], level[pts[first]]))
    remap = np.empty(len(ukey), dtype=np.int64)
    remap[order] = np.arange(len(ukey))
    cluster = np.full(n, -1, dtype=np.int64)
    cluster[pts] = remap[inv]
    n_clusters = len(ukey)

    counts = np.bincount(cluster[pts], minlength=n_clusters).astype(np.float64)
    centroids = np.stack(
        [np.bincount(cluster[pts], weights=xyz[pts, a], minlength=n_clusters) for a in range(3)],
        axis=1,
    ) / counts[:, None]
    c_level = np.empty(n_clusters, dtype=np.int64)
    c_level[cluster[pts]] = level[pts]

    # child/parent cluster pairs sharing a kNN edge across one level step
    ok = reach[rows] & reach[cols]
    r, c = rows[ok], cols[ok]
    up = level[c] == level[r] + 1
    down = level[r] == level[c] + 1
    child = np.concatenate([cluster[c[up]], cluster[r[down]]])
    parent = np.concatenate([cluster[r[up]], cluster[c[down]]])
    parent_of = np.full(n_clusters, -1, dtype=np.int64)
    if len(child):
        pairs = np.unique(np.stack([child, parent], axis=1), axis=0)
        d = np.linalg.norm(centroids[pairs[:, 0]] - centroids[pairs[:, 1]], axis=1)
        sel = np.lexsort((pairs[:, 1], d, pairs[:, 0]))
        pairs = pairs[sel]
        firsts = np.flatnonzero(np.r_[True, pairs[1:, 0] != pairs[:-1, 0]])
        parent_of[pairs[firsts, 0]] = pairs[firsts, 1]

    # one pass of spur pruning: small tip clusters hanging off a larger parent
    keep = np.ones(n_clusters, dtype=bool)
    if params.spur_ratio > 0:
        has_parent = parent_of >= 0
        n_children = np.bincount(parent_of[has_parent], minlength=n_clusters)
        tip = has_parent & (n_children == 0)
        small = counts < params.spur_ratio * counts[np.where(has_parent, parent_of, 0)]
        keep &= ~(tip & small)
    new_id = np.cumsum(keep) - 1
    edges: set[tuple[int, int]] = set()
    for ch in np.flatnonzero(keep & (parent_of >= 0)):
        a, b = int(new_id[ch]), int(new_id[parent_of[ch]])
        edges.add((min(a, b), max(a, b)))
    return SkeletonGraph(centroids[keep], edges, None, counts[keep].astype(np.int64))
