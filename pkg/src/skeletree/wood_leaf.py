"""Simplified wood/leaf point classification.

Wood returns are assumed brighter than foliage.  The intensity split uses an
Otsu threshold and is refined with a relative voxel-density test: sparse
voxels (few points compared with the median occupied voxel) are leaf.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import (
    DegenerateExtent,
    DegenerateInput,
    EmptyCloud,
    LengthMismatch,
    MissingIntensity,
)
from .voxel_grid import build_grid

__all__ = [
    "ClassLabel",
    "FilterConfig",
    "otsu_threshold",
    "classify_points",
    "filter_wood",
]

OTSU_BINS = 256


class ClassLabel(enum.IntEnum):
    LEAF = 0
    WOOD = 1


FilterMethod = Literal["intensity_otsu", "intensity_fixed", "density_only", "passthrough"]


@dataclass(frozen=True)
class FilterConfig:
    method: FilterMethod = "intensity_otsu"
    fixed_threshold: float | None = None
    density_ratio_threshold: float = 0.25
    invert_intensity: bool = False
    n_divisions: int = 100

    def __post_init__(self):
        if self.method not in ("intensity_otsu", "intensity_fixed", "density_only", "passthrough"):
            raise ValueError(f"unknown filter method {self.method!r}")
        if not 0 < self.density_ratio_threshold <= 1:
            raise ValueError("density_ratio_threshold must lie in (0, 1]")
        if self.method == "intensity_fixed" and self.fixed_threshold is None:
            raise ValueError("intensity_fixed needs fixed_threshold")

    @property
    def needs_intensity(self) -> bool:
        return self.method.startswith("intensity")


def otsu_threshold(values) -> float:
    """Otsu threshold over a 256-bin histogram spanning ``[min, max]``.

    The returned value is a bin edge: values ``>= threshold`` form the upper
    class.  When several splits tie (e.g. two point masses) the middle of
    the first tied run is used.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2 or v.min() == v.max():
        raise DegenerateInput("Otsu threshold needs at least two distinct values")
    hist, edges = np.histogram(v, bins=OTSU_BINS, range=(v.min(), v.max()))
    centers = (edges[:-1] + edges[1:]) / 2
    p = hist / hist.sum()
    w0 = np.cumsum(p)[:-1]
    w1 = 1.0 - w0
    mu_cum = np.cumsum(p * centers)[:-1]
    mu_t = (p * centers).sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_t * w0 - mu_cum) ** 2 / (w0 * w1)
    between = np.nan_to_num(between, nan=-1.0, posinf=-1.0)
    best = between.max()
    ties = np.flatnonzero(between >= best - 1e-12 * max(best, 1.0))
    run_end = ties[0]
    while run_end + 1 in ties:
        run_end += 1
    k = (ties[0] + run_end) // 2
    # split after bin k
    return float(edges[k + 1])


def _density_mask(xyz: np.ndarray, ratio: float, n: int) -> np.ndarray:
    try:
        grid = build_grid(xyz, n)
    except DegenerateExtent:
        return np.ones(len(xyz), dtype=bool)
    median = float(np.median(grid.counts))
    dense_cell = grid.counts >= ratio * median
    mask = np.empty(len(xyz), dtype=bool)
    mask[grid.order] = np.repeat(dense_cell, grid.counts)
    return mask


def classify_points(cloud, cfg: FilterConfig = FilterConfig()) -> np.ndarray:
    """Label every point; returns an int8 array of :class:`ClassLabel` values."""
    n_pts = len(cloud)
    if n_pts == 0:
        raise EmptyCloud("cannot classify an empty cloud")
    if cfg.method == "passthrough":
        return np.full(n_pts, ClassLabel.WOOD, dtype=np.int8)
    if cfg.method == "density_only":
        wood = _density_mask(cloud.xyz, cfg.density_ratio_threshold, cfg.n_divisions)
        return wood.astype(np.int8)

    if cloud.intensity is None:
        raise MissingIntensity(f"filter method {cfg.method} needs intensity values")
    inten = -cloud.intensity if cfg.invert_intensity else cloud.intensity
    if cfg.method == "intensity_otsu":
        t = otsu_threshold(inten)
    else:
        t = -cfg.fixed_threshold if cfg.invert_intensity else cfg.fixed_threshold
    wood = inten >= t
    idx = np.flatnonzero(wood)
    if len(idx) > 1:
        keep = _density_mask(cloud.xyz[idx], cfg.density_ratio_threshold, cfg.n_divisions)
        wood[idx[~keep]] = False
    return wood.astype(np.int8)


def filter_wood(cloud, labels):
    labels = np.asarray(labels)
    if len(labels) != len(cloud):
        raise LengthMismatch(f"{len(labels)} labels for {len(cloud)} points")
    keep = np.flatnonzero(labels == ClassLabel.WOOD)
    if len(keep) == 0:
        raise EmptyCloud("no wood points left after filtering")
    return cloud.subset(keep)
