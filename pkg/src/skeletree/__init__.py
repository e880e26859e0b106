"""Curve skeletons of trees from terrestrial laser scans.

The pipeline filters leaf points, voxelizes the wood points on an
anisotropic grid, thins the voxels to unit width, links one barycentric node
per remaining voxel, joins occlusion-split fragments, and recenters and
smooths the result.  A graph-search baseline and throughput reporting are
included for comparison.
"""

from .breakpoint import ConnectParams, connect_all, connect_branches
from .errors import SkeletreeError
from .gsa import GsaParams, extract_gsa
from .io_formats import PointCloud, export_cloud, export_skeleton, load_cloud, load_skeleton
from .metrics import RunReport, compute_tpmp, emit_report
from .pipeline import PipelineConfig, PipelineResult, RefineConfig, run_ftsem, run_gsa
from .skeleton_graph import SkeletonGraph, build_raw_skeleton
from .synth import TreeSpec, generate
from .thinning import BinaryGrid, thin
from .voxel_grid import VoxelGrid, build_grid, mark_wood_voxels
from .wood_leaf import FilterConfig, classify_points, filter_wood

__version__ = "0.1.0"

__all__ = [
    "BinaryGrid", "ConnectParams", "FilterConfig", "GsaParams", "PipelineConfig",
    "PipelineResult", "PointCloud", "RefineConfig", "RunReport", "SkeletonGraph",
    "SkeletreeError", "TreeSpec", "VoxelGrid",
    "build_grid", "build_raw_skeleton", "classify_points", "compute_tpmp", "connect_all",
    "connect_branches", "emit_report", "export_cloud", "export_skeleton", "extract_gsa",
    "filter_wood", "generate", "load_cloud", "load_skeleton", "mark_wood_voxels",
    "run_ftsem", "run_gsa", "thin",
]
