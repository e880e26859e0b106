"""Anisotropic N x N x N voxelization of a point cloud.

The cloud's bounding box is divided into ``n`` equal parts per axis, so the
voxels are boxes whose edge lengths differ per axis.  Voxel edge length is
``length / n`` as a real number; no flooring is applied (flooring to whole
meters gives zero-sized voxels for ordinary trees).

Occupancy is stored sparsely: only occupied cells are kept, as a
lexicographically sorted array of integer indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import DegenerateExtent, EmptyCloud, InvalidN, OutOfExtent

__all__ = [
    "OFFSETS26",
    "Extent",
    "GridConfig",
    "VoxelCell",
    "VoxelGrid",
    "compute_extent",
    "make_grid_config",
    "point_to_index",
    "build_grid",
    "mark_wood_voxels",
    "neighbors26",
]

OFFSETS26: tuple[tuple[int, int, int], ...] = tuple(
    d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)
)


def _xyz(cloud) -> np.ndarray:
    xyz = getattr(cloud, "xyz", cloud)
    return np.asarray(xyz, dtype=np.float64).reshape(-1, 3)


@dataclass(frozen=True)
class Extent:
    min_corner: np.ndarray
    max_corner: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return self.max_corner - self.min_corner


@dataclass(frozen=True)
class GridConfig:
    n_divisions: int
    voxel_size: np.ndarray

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.voxel_size))


@dataclass(frozen=True)
class VoxelCell:
    count: int
    point_indices: np.ndarray


@dataclass(frozen=True)
class VoxelGrid:
    """Sparse occupancy grid.

    ``keys[r]`` is the ``(i, j, k)`` index of the r-th occupied cell and
    ``order[offsets[r]:offsets[r + 1]]`` are the indices of the source points
    that fall in it.  ``wood`` flags which occupied cells passed
    :func:`mark_wood_voxels`.
    """

    config: GridConfig
    extent: Extent
    keys: np.ndarray
    counts: np.ndarray
    order: np.ndarray
    offsets: np.ndarray
    wood: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.config.n_divisions

    @property
    def n_points(self) -> int:
        return int(self.counts.sum())

    def linear(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3)
        n = self.n
        return (idx[:, 0] * n + idx[:, 1]) * n + idx[:, 2]

    @cached_property
    def _linear_keys(self) -> np.ndarray:
        return self.linear(self.keys)

    def rows(self, idx: np.ndarray) -> np.ndarray:
        """Row in ``keys`` of each requested voxel, or -1 when unoccupied."""
        lin = self.linear(idx)
        lk = self._linear_keys
        pos = np.searchsorted(lk, lin)
        pos_c = np.minimum(pos, len(lk) - 1)
        return np.where(lk[pos_c] == lin, pos_c, -1)

    @cached_property
    def occupancy(self) -> dict[tuple[int, int, int], VoxelCell]:
        return {
            (int(a), int(b), int(c)): self.cell_at(r)
            for r, (a, b, c) in enumerate(self.keys)
        }

    def cell_at(self, row: int) -> VoxelCell:
        pts = self.order[self.offsets[row] : self.offsets[row + 1]]
        return VoxelCell(int(self.counts[row]), pts)

    @cached_property
    def wood_mask(self) -> set[tuple[int, int, int]]:
        return {(int(a), int(b), int(c)) for a, b, c in self.keys[self.wood]}

    @property
    def wood_keys(self) -> np.ndarray:
        return self.keys[self.wood]

    def occupied_sums(self, xyz) -> np.ndarray:
        """Per occupied cell coordinate sums, in ``keys`` order."""
        return np.add.reduceat(_xyz(xyz)[self.order], self.offsets[:-1], axis=0)

    def cell_sums(self, xyz, voxels: np.ndarray, occupied_sums: np.ndarray | None = None):
        """Coordinate sums and point counts of the requested voxels.

        Pass ``occupied_sums`` (from :meth:`occupied_sums`) to avoid
        recomputing them on repeated calls.
        """
        rows = self.rows(voxels)
        sums = np.zeros((len(rows), 3))
        counts = np.zeros(len(rows), dtype=np.int64)
        ok = rows >= 0
        if np.any(ok):
            if occupied_sums is None:
                occupied_sums = self.occupied_sums(xyz)
            sums[ok] = occupied_sums[rows[ok]]
            counts[ok] = self.counts[rows[ok]]
        return sums, counts

    def voxel_bounds(self, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx, dtype=np.float64)
        lo = self.extent.min_corner + idx * self.config.voxel_size
        return lo, lo + self.config.voxel_size

    def voxel_center(self, idx) -> np.ndarray:
        lo, hi = self.voxel_bounds(idx)
        return (lo + hi) / 2


def compute_extent(cloud) -> Extent:
    xyz = _xyz(cloud)
    if len(xyz) == 0:
        raise EmptyCloud("cannot compute the extent of an empty cloud")
    ext = Extent(xyz.min(axis=0), xyz.max(axis=0))
    if np.any(ext.lengths <= 0):
        axes = "".join("xyz"[a] for a in np.flatnonzero(ext.lengths <= 0))
        raise DegenerateExtent(f"zero extent along axis {axes}")
    return ext


def make_grid_config(extent: Extent, n: int) -> GridConfig:
    if int(n) != n or n < 2:
        raise InvalidN(f"n_divisions must be an integer >= 2, got {n}")
    if np.any(extent.lengths <= 0):
        raise DegenerateExtent("extent has a zero-length axis")
    return GridConfig(int(n), extent.lengths / n)


def _indices(xyz: np.ndarray, config: GridConfig, extent: Extent) -> np.ndarray:
    rel = (xyz - extent.min_corner) / config.voxel_size
    idx = np.floor(rel).astype(np.int64)
    # max face belongs to the last cell
    np.clip(idx, 0, config.n_divisions - 1, out=idx)
    return idx


def point_to_index(p, config: GridConfig, extent: Extent) -> tuple[int, int, int]:
    p = np.asarray(getattr(p, "xyz", p), dtype=np.float64).reshape(3)
    if np.any(p < extent.min_corner) or np.any(p > extent.max_corner):
        raise OutOfExtent(f"point {p.tolist()} outside extent")
    i, j, k = _indices(p[None, :], config, extent)[0]
    return int(i), int(j), int(k)


def build_grid(cloud, n: int = 100) -> VoxelGrid:
    xyz = _xyz(cloud)
    extent = compute_extent(xyz)
    config = make_grid_config(extent, n)
    idx = _indices(xyz, config, extent)
    lin = (idx[:, 0] * n + idx[:, 1]) * n + idx[:, 2]
    order = np.argsort(lin, kind="stable")
    ulin, starts, counts = np.unique(lin[order], return_index=True, return_counts=True)
    keys = np.stack([ulin // (n * n), (ulin // n) % n, ulin % n], axis=1)
    offsets = np.append(starts, len(xyz)).astype(np.int64)
    return VoxelGrid(
        config, extent, keys, counts.astype(np.int64), order, offsets,
        np.zeros(len(keys), dtype=bool),
    )


def mark_wood_voxels(grid: VoxelGrid, threshold_ratio: float = 0.25) -> VoxelGrid:
    """Keep occupied cells holding at least ``threshold_ratio`` x the median count."""
    if len(grid.counts) == 0:
        return replace(grid, wood=np.zeros(0, dtype=bool))
    median = float(np.median(grid.counts))
    return replace(grid, wood=grid.counts >= threshold_ratio * median)


def neighbors26(idx, n: int) -> list[tuple[int, int, int]]:
    i, j, k = (int(c) for c in idx)
    out = []
    for di, dj, dk in OFFSETS26:
        a, b, c = i + di, j + dj, k + dk
        if 0 <= a < n and 0 <= b < n and 0 <= c < n:
            out.append((a, b, c))
    return out
