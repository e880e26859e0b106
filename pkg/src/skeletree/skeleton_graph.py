"""Raw skeleton construction: one barycentric node per thinned voxel.

Nodes sit at the mean of the original wood points inside their voxel and
are linked to every 26-adjacent thinned voxel.  Connected components of the
resulting graph are the *branches* that breakpoint connection later joins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyGrid, EmptyInput
from .voxel_grid import OFFSETS26, VoxelGrid

__all__ = [
    "SkeletonNode",
    "SkeletonGraph",
    "Branch",
    "barycenter",
    "build_raw_skeleton",
    "branches_sorted",
    "find_breakpoints",
]


@dataclass(frozen=True)
class SkeletonNode:
    position: np.ndarray
    voxel: tuple[int, int, int] | None
    source_point_count: int


@dataclass(frozen=True)
class Branch:
    id: int
    node_indices: list[int]
    min_z_node: int
    node_count: int


@dataclass
class SkeletonGraph:
    """Undirected skeleton graph.

    ``positions`` is an ``(n, 3)`` float array.  Edges are stored as
    ``(i, j)`` tuples with ``i < j`` so that the set can never hold the same
    edge twice.  ``branch_labels`` maps every node to the id of its connected
    component; component ids are assigned in order of their smallest node
    index, which keeps labeling deterministic.
    """

    positions: np.ndarray
    edges: set[tuple[int, int]] = field(default_factory=set)
    voxels: np.ndarray | None = None
    point_counts: np.ndarray | None = None
    branch_labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            normalized.add((i, j) if i < j else (j, i))
        self.edges = normalized
        self.relabel()

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def n_branches(self) -> int:
        return int(self.branch_labels.max()) + 1 if len(self.branch_labels) else 0

    def node(self, i: int) -> SkeletonNode:
        voxel = None if self.voxels is None else tuple(int(v) for v in self.voxels[i])
        count = 1 if self.point_counts is None else int(self.point_counts[i])
        return SkeletonNode(self.positions[i].copy(), voxel, count)

    def add_edge(self, i: int, j: int) -> bool:
        """Insert edge ``{i, j}``; returns False for self-loops and duplicates."""
        i, j = int(i), int(j)
        if i == j:
            return False
        key = (i, j) if i < j else (j, i)
        if key in self.edges:
            return False
        self.edges.add(key)
        return True

    def edge_array(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.edges), dtype=np.int64)

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, j in sorted(self.edges):
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        if self.edges:
            e = self.edge_array()
            np.add.at(deg, e[:, 0], 1)
            np.add.at(deg, e[:, 1], 1)
        return deg

    def relabel(self) -> None:
        self.branch_labels = component_labels(self.n_nodes, self.edges)

    def branches(self) -> list[Branch]:
        out = []
        for bid in range(self.n_branches):
            idx = np.flatnonzero(self.branch_labels == bid)
            z = self.positions[idx, 2]
            out.append(Branch(bid, idx.tolist(), int(idx[np.argmin(z)]), len(idx)))
        return out

    def copy(self) -> "SkeletonGraph":
        return SkeletonGraph(
            self.positions.copy(),
            set(self.edges),
            None if self.voxels is None else self.voxels.copy(),
            None if self.point_counts is None else self.point_counts.copy(),
        )


def component_labels(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            # keep the smaller index as root
            if ri < rj:
                parent[rj] = ri
            else:
                parent[ri] = rj
    labels = np.empty(n, dtype=np.int64)
    ids: dict[int, int] = {}
    for v in range(n):
        r = find(v)
        if r not in ids:
            ids[r] = len(ids)
        labels[v] = ids[r]
    return labels


def barycenter(points: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyInput("barycenter of an empty point list")
    return pts.sum(axis=0) / len(pts)


def build_raw_skeleton(thinned, grid: VoxelGrid, cloud, allow_empty: bool = False) -> SkeletonGraph:
    """Build the raw skeleton graph from a thinned voxel set.

    Each thinned voxel becomes a node at the barycenter of the cloud points
    stored in that voxel.  Edges are placed by an iterative depth-first walk
    that starts from the lowest voxel index and visits 26-neighbors in
    lexicographic order; each undirected edge is recorded once.

    With ``allow_empty`` a thinned voxel holding no points (one created by
    gap closing or hole filling inside a hollow stem) is placed at the
    barycenter of the points in the smallest surrounding cube of voxels that
    holds any, clamped into its own voxel box.
    """
    fg = sorted(tuple(int(c) for c in v) for v in thinned.foreground)
    if not fg:
        raise EmptyGrid("no thinned voxels to build a skeleton from")
    index = {v: n for n, v in enumerate(fg)}

    voxels = np.array(fg, dtype=np.int64)
    occ_sums = grid.occupied_sums(cloud.xyz)
    sums, counts = grid.cell_sums(cloud.xyz, voxels, occ_sums)
    empty = np.flatnonzero(counts == 0)
    if len(empty) and not allow_empty:
        raise EmptyGrid("thinned voxel without source points")
    if len(empty):
        sums[empty], counts[empty] = _cube_sums(grid, occ_sums, voxels[empty])
    positions = sums / counts[:, None]
    if len(empty):
        lo, hi = grid.voxel_bounds(voxels[empty])
        positions[empty] = np.clip(positions[empty], lo, hi)

    edges: set[tuple[int, int]] = set()
    visited = bytearray(len(fg))
    for start in range(len(fg)):
        if visited[start]:
            continue
        visited[start] = 1
        stack = [start]
        while stack:
            cur = stack.pop()
            ci, cj, ck = fg[cur]
            for di, dj, dk in OFFSETS26:
                nb = index.get((ci + di, cj + dj, ck + dk))
                if nb is None:
                    continue
                edges.add((cur, nb) if cur < nb else (nb, cur))
                if not visited[nb]:
                    visited[nb] = 1
                    stack.append(nb)
    return SkeletonGraph(positions, edges, voxels, counts)


def _cube_sums(grid: VoxelGrid, occ_sums: np.ndarray, voxels: np.ndarray):
    """Point sums over the smallest Chebyshev ball of occupied voxels."""
    tree = cKDTree(grid.keys)
    reach, _ = tree.query(voxels, p=np.inf)
    sums = np.zeros((len(voxels), 3))
    counts = np.zeros(len(voxels), dtype=np.int64)
    for r, (v, d) in enumerate(zip(voxels, reach)):
        rows = tree.query_ball_point(v, d + 0.5, p=np.inf)
        sums[r] = occ_sums[rows].sum(axis=0)
        counts[r] = grid.counts[rows].sum()
    return sums, counts


def branches_sorted(graph: SkeletonGraph) -> list[Branch]:
    """Branches by descending node count, ties by lower min-z then lower id."""
    if graph.n_nodes == 0:
        raise EmptyInput("empty graph")
    z = graph.positions[:, 2]
    return sorted(graph.branches(), key=lambda b: (-b.node_count, z[b.min_z_node], b.id))


def find_breakpoints(graph: SkeletonGraph, branch: Branch, degrees: np.ndarray | None = None) -> list[int]:
    """Degree <= 1 nodes of ``branch``, lowest first."""
    deg = graph.degrees() if degrees is None else degrees
    idx = [i for i in branch.node_indices if deg[i] <= 1]
    return sorted(idx, key=lambda i: (graph.positions[i, 2], i))
