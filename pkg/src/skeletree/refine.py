"""Skeleton node recentering and smoothing.

Barycentric nodes of a scanned stem sit on the scanned side of the stem, not
on its axis.  Each chain node is moved to the center of a circle (or, for
clearly non-circular cross-sections, an ellipse) fitted to a thin slice of
the wood points around it.  Chains are then relaxed with synchronous
Laplacian smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateFit, EmptySlice, NotAnEllipse
from .skeleton_graph import SkeletonGraph

__all__ = [
    "SliceFit",
    "plane_basis",
    "slice_points",
    "fit_circle",
    "fit_ellipse",
    "recenter_nodes",
    "laplacian_smooth",
    "bending_energy",
]


@dataclass(frozen=True)
class SliceFit:
    center: np.ndarray
    radius_or_axes: float | tuple[float, float]
    rms_residual: float
    model: Literal["circle", "ellipse"]

    @property
    def mean_radius(self) -> float:
        r = self.radius_or_axes
        return float(np.mean(r)) if isinstance(r, tuple) else float(r)


def plane_basis(normal) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal ``(u, v)`` spanning the plane perpendicular to ``normal``."""
    t = np.asarray(normal, dtype=np.float64)
    t = t / np.linalg.norm(t)
    x, y, z = t
    # cross with the axis least aligned with t
    a = int(np.argmin(np.abs(t)))
    if a == 0:
        u = np.array([0.0, z, -y])
    elif a == 1:
        u = np.array([-z, 0.0, x])
    else:
        u = np.array([y, -x, 0.0])
    u /= np.sqrt(u @ u)
    v = np.array([y * u[2] - z * u[1], z * u[0] - x * u[2], x * u[1] - y * u[0]])
    return u, v


def slice_points(
    xyz,
    center,
    tangent,
    thickness: float,
    lateral_radius: float,
    tree: cKDTree | None = None,
) -> np.ndarray:
    """Points within ``thickness / 2`` of the plane through ``center``.

    Returned as ``(k, 2)`` coordinates in :func:`plane_basis` of ``tangent``,
    relative to ``center``, keeping only points within ``lateral_radius`` of
    ``center`` inside the plane.
    """
    if thickness <= 0:
        raise ValueError("slice thickness must be positive")
    if lateral_radius <= 0:
        raise ValueError("lateral radius must be positive")
    t = np.asarray(tangent, dtype=np.float64)
    if abs(np.linalg.norm(t) - 1.0) > 1e-6:
        raise ValueError("tangent must be a unit vector")
    c = np.asarray(center, dtype=np.float64)
    xyz = getattr(xyz, "xyz", xyz)
    if tree is not None:
        reach = float(np.hypot(lateral_radius, thickness / 2))
        idx = tree.query_ball_point(c, reach)
        pts = np.asarray(xyz)[np.asarray(idx, dtype=np.int64)] - c
    else:
        pts = np.asarray(xyz, dtype=np.float64) - c
    along = pts @ t
    u, v = plane_basis(t)
    flat = np.column_stack([pts @ u, pts @ v])
    keep = (np.abs(along) <= thickness / 2) & (np.einsum("ij,ij->i", flat, flat) <= lateral_radius**2)
    if not np.any(keep):
        raise EmptySlice("no points in slice")
    return flat[keep]


def _check_spread(pts: np.ndarray, need: int) -> tuple[np.ndarray, float]:
    if len(pts) < need:
        raise DegenerateFit(f"need at least {need} points, got {len(pts)}")
    mean = pts.mean(axis=0)
    centered = pts - mean
    w = np.linalg.eigvalsh(centered.T @ centered)
    if w[1] <= 0 or w[0] <= 1e-18 * w[1]:
        raise DegenerateFit("points are collinear")
    return mean, float(np.sqrt((w[0] + w[1]) / len(pts)))


def fit_circle(points2d) -> SliceFit:
    """Algebraic least-squares circle: solve ``x² + y² + D x + E y + F = 0``."""
    pts = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    mean, scale = _check_spread(pts, 3)
    q = (pts - mean) / scale
    A = np.column_stack([q[:, 0], q[:, 1], np.ones(len(q))])
    rhs = -(q[:, 0] ** 2 + q[:, 1] ** 2)
    (d, e, f), *_ = np.linalg.lstsq(A, rhs, rcond=None)
    cq = np.array([-d / 2, -e / 2])
    r2 = cq @ cq - f
    if r2 <= 0:
        raise DegenerateFit("circle fit produced no real radius")
    center = mean + cq * scale
    radius = float(np.sqrt(r2) * scale)
    resid = np.linalg.norm(pts - center, axis=1) - radius
    return SliceFit(center, radius, float(np.sqrt(np.mean(resid**2))), "circle")


def fit_ellipse(points2d) -> SliceFit:
    """Direct least-squares ellipse (Fitzgibbon) in the numerically stable
    Halir-Flusser form, on centered and scaled coordinates."""
    pts = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    mean, scale = _check_spread(pts, 5)
    q = (pts - mean) / scale
    x, y = q[:, 0], q[:, 1]
    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1, S2, S3 = D1.T @ D1, D1.T @ D2, D2.T @ D2
    try:
        T = -np.linalg.solve(S3, S2.T)
    except np.linalg.LinAlgError:
        raise DegenerateFit("singular scatter matrix") from None
    M = S1 + S2 @ T
    M = np.array([M[2] / 2, -M[1], M[0] / 2])
    evals, evecs = np.linalg.eig(M)
    evecs = np.real(evecs)
    cond = 4 * evecs[0] * evecs[2] - evecs[1] ** 2
    ok = np.flatnonzero(cond > 0)
    if len(ok) == 0:
        raise NotAnEllipse("no elliptical solution")
    a1 = evecs[:, ok[np.argmin(np.abs(np.real(evals[ok])))]]
    a, b, c = a1
    d, e, f = T @ a1
    den = b * b - 4 * a * c
    if den >= 0:
        raise NotAnEllipse("conic is not an ellipse")
    cx = (2 * c * d - b * e) / den
    cy = (2 * a * e - b * d) / den
    # semi-axes from the centered conic
    f0 = a * cx * cx + b * cx * cy + c * cy * cy + d * cx + e * cy + f
    lam = np.linalg.eigvalsh(np.array([[a, b / 2], [b / 2, c]]))
    with np.errstate(divide="ignore", invalid="ignore"):
        axes2 = -f0 / lam
    if not np.all(np.isfinite(axes2)) or np.any(axes2 <= 0):
        raise NotAnEllipse("degenerate ellipse axes")
    axes = np.sqrt(axes2) * scale
    center = mean + np.array([cx, cy]) * scale

    # radial residual in the ellipse frame
    w, vecs = np.linalg.eigh(np.array([[a, b / 2], [b / 2, c]]))
    local = (pts - center) @ vecs
    rho = np.sqrt(np.sum((local / axes) ** 2, axis=1))
    resid = (rho - 1.0) * float(np.mean(axes))
    return SliceFit(
        center,
        (float(axes.max()), float(axes.min())),
        float(np.sqrt(np.mean(resid**2))),
        "ellipse",
    )


def _tangent(pos: np.ndarray, i: int, nbrs: list[int]) -> np.ndarray | None:
    if len(nbrs) == 1:
        d = pos[nbrs[0]] - pos[i]
    elif len(nbrs) == 2:
        d = pos[nbrs[1]] - pos[nbrs[0]]
    else:
        return None
    norm = np.linalg.norm(d)
    return d / norm if norm > 0 else None


def recenter_nodes(
    graph: SkeletonGraph,
    cloud,
    thickness: float,
    lateral_radius: float,
    residual_switch: float = 0.15,
    tree: cKDTree | None = None,
    max_slice_points: int = 4000,
) -> SkeletonGraph:
    """Move chain nodes (degree 1 or 2) to the fitted slice center.

    Nodes whose slice is empty or cannot be fitted keep their position, as do
    junctions (degree >= 3) and isolated nodes.  A fitted center farther
    than ``lateral_radius`` from the node is rejected.  Slices larger than
    ``max_slice_points`` are evenly subsampled before fitting.
    """
    xyz = getattr(cloud, "xyz", cloud)
    if tree is None:
        tree = cKDTree(xyz)
    pos = graph.positions
    new = pos.copy()
    adj = graph.adjacency()
    for i, nbrs in enumerate(adj):
        t = _tangent(pos, i, nbrs)
        if t is None:
            continue
        try:
            flat = slice_points(xyz, pos[i], t, thickness, lateral_radius, tree)
            if len(flat) > max_slice_points:
                flat = flat[:: -(-len(flat) // max_slice_points)]
            fit = fit_circle(flat)
            if fit.rms_residual / fit.radius_or_axes > residual_switch and len(flat) >= 5:
                try:
                    fit = fit_ellipse(flat)
                except DegenerateFit:
                    pass
        except (EmptySlice, DegenerateFit):
            continue
        if np.linalg.norm(fit.center) > lateral_radius:
            continue
        u, v = plane_basis(t)
        new[i] = pos[i] + fit.center[0] * u + fit.center[1] * v
    out = graph.copy()
    out.positions = new
    return out


def laplacian_smooth(graph: SkeletonGraph, lam: float = 0.5, iterations: int = 3) -> SkeletonGraph:
    """Synchronous smoothing of degree-2 nodes; ends and junctions stay fixed."""
    if not 0 <= lam < 1:
        raise ValueError("lambda must lie in [0, 1)")
    out = graph.copy()
    if not graph.edges or lam == 0 or iterations <= 0:
        return out
    e = graph.edge_array()
    deg = graph.degrees()
    movable = deg == 2
    pos = out.positions
    for _ in range(iterations):
        acc = np.zeros_like(pos)
        np.add.at(acc, e[:, 0], pos[e[:, 1]])
        np.add.at(acc, e[:, 1], pos[e[:, 0]])
        mean = acc[movable] / 2
        pos = pos.copy()
        pos[movable] = (1 - lam) * pos[movable] + lam * mean
    out.positions = pos
    return out


def bending_energy(chain: np.ndarray) -> float:
    """Sum of squared second differences along an ordered polyline."""
    c = np.asarray(chain, dtype=np.float64)
    if len(c) < 3:
        return 0.0
    d2 = c[:-2] - 2 * c[1:-1] + c[2:]
    return float(np.sum(d2**2))
