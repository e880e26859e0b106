"""End-to-end skeleton extraction: filter, voxelize, thin, graph, connect, refine."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .breakpoint import ConnectParams, ConnectResult, connect_branches
from .errors import EmptyCloud, EmptyGrid, FilterRemovedEverything, SkeletreeError, StageError
from .gsa import GsaParams, extract_gsa
from .io_formats import PointCloud
from .metrics import RunReport, StageTimer
from .refine import laplacian_smooth, recenter_nodes
from .skeleton_graph import SkeletonGraph, build_raw_skeleton
from .thinning import BinaryGrid, close_gaps, closing_radius, fill_cross_section_holes, thin
from .voxel_grid import build_grid, mark_wood_voxels
from .wood_leaf import FilterConfig, classify_points, filter_wood

__all__ = ["RefineConfig", "PipelineConfig", "PipelineResult", "run_ftsem", "run_gsa"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefineConfig:
    slice_thickness: float | None = None  # None: voxel z-size
    residual_switch: float = 0.15
    lateral_factor: float = 3.0  # lateral retention radius in voxel diagonals
    smooth_lambda: float = 0.5
    smooth_iters: int = 3
    max_points: int | None = 250_000  # stride-subsample the wood cloud for slice fitting


@dataclass(frozen=True)
class PipelineConfig:
    filter: FilterConfig = field(default_factory=FilterConfig)
    n_divisions: int = 100
    wood_voxel_ratio: float = 0.25
    connect: ConnectParams = field(default_factory=ConnectParams)
    refine: RefineConfig = field(default_factory=RefineConfig)
    close_gaps: bool = True
    fill_holes: bool = True
    max_thinning_passes: int | None = None
    enable_filter: bool = True
    enable_connect: bool = True
    enable_recenter: bool = True
    enable_smooth: bool = True


@dataclass
class PipelineResult:
    graph: SkeletonGraph
    report: RunReport
    raw_graph: SkeletonGraph
    connect: ConnectResult | None
    voxel_diagonal: float
    wood_cloud: PointCloud = field(repr=False)


@contextmanager
def _stage(timer: StageTimer, name: str):
    with timer.stage(name):
        try:
            yield
        except SkeletreeError as exc:
            if getattr(exc, "stage", None) is None:
                exc.stage = name
            raise
        except (ValueError, ArithmeticError) as exc:
            raise StageError(name, exc) from exc


def run_ftsem(cloud: PointCloud, cfg: PipelineConfig = PipelineConfig(), tree_id: str = "") -> PipelineResult:
    """Run every enabled stage and time it.

    The timed region starts after the cloud is loaded and ends with the final
    skeleton; file I/O is excluded.  Errors keep their type and gain a
    ``stage`` attribute naming the failing stage.
    """
    if len(cloud) == 0:
        raise EmptyCloud("empty input cloud")
    timer = StageTimer()

    with _stage(timer, "filter"):
        wood = cloud
        if cfg.enable_filter:
            labels = classify_points(cloud, cfg.filter)
            try:
                wood = filter_wood(cloud, labels)
            except EmptyCloud:
                raise FilterRemovedEverything("filtering removed every point") from None

    with _stage(timer, "voxelize"):
        grid = mark_wood_voxels(build_grid(wood, cfg.n_divisions), cfg.wood_voxel_ratio)
        keys = grid.wood_keys
        if len(keys) == 0:
            raise EmptyGrid("no wood voxels")
        fg = BinaryGrid(grid.n, set(map(tuple, keys.tolist())))

    with _stage(timer, "thin"):
        solid = fg
        if cfg.close_gaps:
            solid = close_gaps(solid, closing_radius(grid.config.voxel_size))
        if cfg.fill_holes:
            solid = fill_cross_section_holes(solid)
        thinned = thin(solid, cfg.max_thinning_passes)

    with _stage(timer, "graph"):
        raw = build_raw_skeleton(thinned, grid, wood, allow_empty=cfg.close_gaps or cfg.fill_holes)
    graph = raw
    log.debug("raw skeleton: %d nodes, %d branches", raw.n_nodes, raw.n_branches)

    conn = None
    with _stage(timer, "connect"):
        if cfg.enable_connect:
            conn = connect_branches(graph, cfg.connect)
            graph = conn.graph

    vs = grid.config.voxel_size
    diag = grid.config.diagonal
    with _stage(timer, "recenter"):
        if cfg.enable_recenter:
            thickness = cfg.refine.slice_thickness or float(vs[2])
            xyz = wood.xyz
            cap = cfg.refine.max_points
            if cap is not None and len(xyz) > cap:
                xyz = xyz[:: -(-len(xyz) // cap)]
            graph = recenter_nodes(
                graph, xyz, thickness, cfg.refine.lateral_factor * diag,
                cfg.refine.residual_switch, cKDTree(xyz),
            )

    with _stage(timer, "smooth"):
        if cfg.enable_smooth:
            graph = laplacian_smooth(graph, cfg.refine.smooth_lambda, cfg.refine.smooth_iters)

    runtime = timer.elapsed
    report = RunReport(
        tree_id=tree_id or cloud.source_path,
        point_count=len(cloud),
        node_count=graph.n_nodes,
        runtime_s=runtime,
        stage_timings=dict(timer.timings),
        residual_branch_count=graph.n_branches,
        raw_branch_count=raw.n_branches,
    )
    return PipelineResult(graph, report, raw, conn, diag, wood)


def run_gsa(cloud: PointCloud, params: GsaParams = GsaParams(), filter_cfg: FilterConfig | None = None):
    """Time the graph-search baseline; returns ``(graph, runtime_s)``."""
    timer = StageTimer()
    wood = cloud
    if filter_cfg is not None:
        wood = filter_wood(cloud, classify_points(cloud, filter_cfg))
    graph = extract_gsa(wood, params)
    return graph, timer.elapsed
