"""Synthetic tree point clouds with known centerlines and labels.

Trees are recursive cone segments: every segment spawns 2-3 children at its
tip.  Wood points are sampled on the segment surfaces with truncated
Gaussian radial noise, leaf points fill ellipsoids around the terminal tips,
and occlusion gaps delete every point inside a window of a chosen segment.
All randomness comes from a PCG64 generator seeded by ``TreeSpec.seed``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput, InvalidSpec
from .io_formats import PointCloud
from .wood_leaf import ClassLabel

__all__ = [
    "OcclusionGap",
    "TreeSpec",
    "Segment",
    "LeafCluster",
    "GroundTruth",
    "generate",
    "skeleton_accuracy",
    "default_tree_spec",
    "load_tree_spec",
]

LENGTH_DECAY = 0.65
RADIAL_NOISE = 0.2  # sigma as a fraction of the local radius
NOISE_CLIP = 2.0  # noise truncated at this many sigmas
GAP_RADIUS = 1.5  # occlusion window radius, in segment base radii
UPWARD_BIAS = 0.3
RESAMPLE_STEP = 0.01
WOOD_INTENSITY = (100.0, 5.0)
LEAF_INTENSITY = (10.0, 5.0)


@dataclass(frozen=True)
class OcclusionGap:
    branch: tuple[int, ...]
    start: float
    length: float


@dataclass(frozen=True)
class TreeSpec:
    depth: int = 3
    trunk_height: float = 6.0
    trunk_radius: float = 0.2
    branch_angle_range: tuple[float, float] = (25.0, 50.0)
    radius_decay: float = 0.6
    points_per_m2: float = 32000.0
    leaf_fraction: float = 0.1
    occlusion_gaps: tuple[OcclusionGap, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.branch_angle_range
        problems = []
        if int(self.depth) != self.depth or self.depth < 0:
            problems.append("depth must be a non-negative integer")
        if self.trunk_height <= 0 or self.trunk_radius <= 0:
            problems.append("trunk dimensions must be positive")
        if not 0 <= lo <= hi <= 180:
            problems.append("branch_angle_range must satisfy 0 <= lo <= hi <= 180")
        if not 0 < self.radius_decay <= 1:
            problems.append("radius_decay must lie in (0, 1]")
        if self.points_per_m2 <= 0:
            problems.append("points_per_m2 must be positive")
        if not 0 <= self.leaf_fraction < 1:
            problems.append("leaf_fraction must lie in [0, 1)")
        for g in self.occlusion_gaps:
            if not (0 <= g.start <= 1 and 0 < g.length <= 1 and g.start + g.length <= 1):
                problems.append(f"gap {g} window must lie within [0, 1]")
        if problems:
            raise InvalidSpec("; ".join(problems))

    def to_json(self) -> dict:
        d = asdict(self)
        d["branch_angle_range"] = list(self.branch_angle_range)
        d["occlusion_gaps"] = [
            {"branch": list(g.branch), "start": g.start, "length": g.length}
            for g in self.occlusion_gaps
        ]
        return d

    @classmethod
    def from_json(cls, data: dict) -> "TreeSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown TreeSpec fields: {sorted(unknown)}")
        kw = dict(data)
        try:
            if "branch_angle_range" in kw:
                lo, hi = kw["branch_angle_range"]
                kw["branch_angle_range"] = (float(lo), float(hi))
            if "occlusion_gaps" in kw:
                kw["occlusion_gaps"] = tuple(
                    OcclusionGap(tuple(int(b) for b in g["branch"]), float(g["start"]), float(g["length"]))
                    for g in kw["occlusion_gaps"]
                )
        except (TypeError, KeyError, ValueError) as exc:
            raise InvalidSpec(f"malformed TreeSpec: {exc}") from None
        spec = cls(**kw)
        spec.validate()
        return spec


def load_tree_spec(path: str | os.PathLike) -> TreeSpec:
    return TreeSpec.from_json(json.loads(Path(path).read_text()))


def default_tree_spec(seed: int = 0, **overrides) -> TreeSpec:
    """Depth-3 tree of roughly one million points."""
    return TreeSpec(seed=seed, **overrides)


@dataclass(frozen=True)
class Segment:
    path: tuple[int, ...]
    start: np.ndarray
    end: np.ndarray
    r0: float
    r1: float

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def direction(self) -> np.ndarray:
        return (self.end - self.start) / self.length

    def radius_at(self, s):
        return self.r0 + (self.r1 - self.r0) * np.asarray(s) / self.length


@dataclass(frozen=True)
class LeafCluster:
    center: np.ndarray
    axes: np.ndarray  # semi-axes along (direction, u, v)
    frame: np.ndarray  # rows: direction, u, v

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        local = (np.asarray(pts) - self.center) @ self.frame.T / self.axes
        return np.sum(local**2, axis=1) <= 1 + tol


@dataclass
class GroundTruth:
    segments: list[Segment]
    labels: np.ndarray
    leaf_clusters: list[LeafCluster] = field(default_factory=list)
    gaps: list[OcclusionGap] = field(default_factory=list)

    @property
    def centerlines(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Each segment as a 2-vertex polyline with per-vertex radius."""
        return [(np.stack([s.start, s.end]), np.array([s.r0, s.r1])) for s in self.segments]

    def segment(self, path) -> Segment:
        path = tuple(path)
        for s in self.segments:
            if s.path == path:
                return s
        raise InvalidSpec(f"no branch with path {list(path)}")

    def in_gap(self, pts: np.ndarray, gap: OcclusionGap) -> np.ndarray:
        seg = self.segment(gap.branch)
        rel = np.asarray(pts) - seg.start
        s = rel @ seg.direction
        radial = np.linalg.norm(rel - np.outer(s, seg.direction), axis=1)
        lo, hi = gap.start * seg.length, (gap.start + gap.length) * seg.length
        return (s >= lo) & (s <= hi) & (radial <= GAP_RADIUS * seg.r0)

    def samples(self, step: float = RESAMPLE_STEP, min_length: float = 0.0) -> np.ndarray:
        out = []
        for seg in self.segments:
            if seg.length < min_length:
                continue
            n = max(2, int(math.ceil(seg.length / step)) + 1)
            t = np.linspace(0.0, 1.0, n)[:, None]
            out.append(seg.start + t * (seg.end - seg.start))
        return np.vstack(out) if out else np.zeros((0, 3))

    def to_json(self) -> dict:
        return {
            "centerlines": [
                {"path": list(s.path), "polyline": [s.start.tolist(), s.end.tolist()],
                 "radius": [s.r0, s.r1]}
                for s in self.segments
            ],
            "leaf_clusters": [
                {"center": c.center.tolist(), "axes": c.axes.tolist(), "frame": c.frame.tolist()}
                for c in self.leaf_clusters
            ],
            "gaps": [{"branch": list(g.branch), "start": g.start, "length": g.length} for g in self.gaps],
            "labels": ["wood" if v == ClassLabel.WOOD else "leaf" for v in self.labels],
        }

    @classmethod
    def from_json(cls, data: dict) -> "GroundTruth":
        segs = [
            Segment(tuple(c["path"]), np.array(c["polyline"][0], float), np.array(c["polyline"][1], float),
                    float(c["radius"][0]), float(c["radius"][1]))
            for c in data["centerlines"]
        ]
        leaves = [LeafCluster(np.array(c["center"]), np.array(c["axes"]), np.array(c["frame"]))
                  for c in data.get("leaf_clusters", [])]
        gaps = [OcclusionGap(tuple(g["branch"]), g["start"], g["length"]) for g in data.get("gaps", [])]
        labels = np.array([ClassLabel.WOOD if v == "wood" else ClassLabel.LEAF for v in data.get("labels", [])],
                          dtype=np.int8)
        return cls(segs, labels, leaves, gaps)


def _frame(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.eye(3)[int(np.argmin(np.abs(d)))]
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _grow(spec: TreeSpec, rng: np.random.Generator) -> list[Segment]:
    trunk = Segment((), np.zeros(3), np.array([0.0, 0.0, spec.trunk_height]),
                    spec.trunk_radius, spec.trunk_radius * spec.radius_decay)
    segments = [trunk]
    frontier = [(trunk, 0)]
    lo, hi = (math.radians(a) for a in spec.branch_angle_range)
    while frontier:
        parent, level = frontier.pop(0)
        if level >= spec.depth:
            continue
        n_children = int(rng.integers(2, 4))
        d = parent.direction
        u, v = _frame(d)
        phase = rng.uniform(0, 2 * math.pi)
        for c in range(n_children):
            tilt = rng.uniform(lo, hi)
            az = phase + 2 * math.pi * c / n_children + rng.uniform(-0.3, 0.3)
            cd = math.cos(tilt) * d + math.sin(tilt) * (math.cos(az) * u + math.sin(az) * v)
            cd = cd + UPWARD_BIAS * np.array([0.0, 0.0, 1.0])
            cd /= np.linalg.norm(cd)
            length = parent.length * LENGTH_DECAY
            child = Segment(parent.path + (c,), parent.end.copy(), parent.end + cd * length,
                            parent.r1, parent.r1 * spec.radius_decay)
            segments.append(child)
            frontier.append((child, level + 1))
    return segments


def _sample_surface(seg: Segment, density: float, rng: np.random.Generator) -> np.ndarray:
    L = seg.length
    area = math.pi * (seg.r0 + seg.r1) * L
    n = int(round(area * density))
    if n == 0:
        return np.zeros((0, 3))
    # arc position with density proportional to the local radius
    w = rng.random(n)
    if abs(seg.r1 - seg.r0) < 1e-12:
        s = w * L
    else:
        k = (seg.r1 - seg.r0) / L
        s = (-seg.r0 + np.sqrt(seg.r0**2 + w * (seg.r0 + seg.r1) * k * L)) / k
    r = seg.radius_at(s)
    noise = np.clip(rng.normal(0.0, 1.0, n), -NOISE_CLIP, NOISE_CLIP) * RADIAL_NOISE * r
    theta = rng.uniform(0, 2 * math.pi, n)
    u, v = _frame(seg.direction)
    rad = (r + noise)[:, None]
    return (seg.start + s[:, None] * seg.direction
            + rad * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v))


def _leaf_clusters(segments: list[Segment], depth: int) -> list[LeafCluster]:
    tips = [s for s in segments if len(s.path) == depth]
    out = []
    for seg in tips:
        d = seg.direction
        u, v = _frame(d)
        axes = np.array([0.45 * seg.length, 0.3 * seg.length, 0.3 * seg.length])
        out.append(LeafCluster(seg.end + 0.2 * seg.length * d, axes, np.stack([d, u, v])))
    return out


def _sample_ellipsoid(cluster: LeafCluster, n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    g *= rng.random(n)[:, None] ** (1 / 3)
    return cluster.center + (g * cluster.axes) @ cluster.frame


def generate(spec: TreeSpec) -> tuple[PointCloud, GroundTruth]:
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    segments = _grow(spec, rng)
    wood = np.vstack([_sample_surface(s, spec.points_per_m2, rng) for s in segments])

    clusters: list[LeafCluster] = []
    leaves = np.zeros((0, 3))
    if spec.leaf_fraction > 0:
        clusters = _leaf_clusters(segments, spec.depth)
        n_leaf = int(round(len(wood) * spec.leaf_fraction / (1 - spec.leaf_fraction)))
        per = np.full(len(clusters), n_leaf // len(clusters))
        per[: n_leaf % len(clusters)] += 1
        leaves = np.vstack([_sample_ellipsoid(c, int(k), rng) for c, k in zip(clusters, per)])

    xyz = np.vstack([wood, leaves])
    labels = np.concatenate([
        np.full(len(wood), ClassLabel.WOOD, dtype=np.int8),
        np.full(len(leaves), ClassLabel.LEAF, dtype=np.int8),
    ])
    inten = np.concatenate([
        rng.normal(*WOOD_INTENSITY, len(wood)),
        rng.normal(*LEAF_INTENSITY, len(leaves)),
    ])

    truth = GroundTruth(segments, labels, clusters, list(spec.occlusion_gaps))
    keep = np.ones(len(xyz), dtype=bool)
    for gap in spec.occlusion_gaps:
        keep &= ~truth.in_gap(xyz, gap)
    truth.labels = labels[keep]
    return PointCloud(xyz[keep], inten[keep], f"synth:seed={spec.seed}"), truth


def skeleton_accuracy(
    extracted,
    truth: GroundTruth,
    voxel_diagonal: float,
    p_t: int = 4,
) -> dict[str, float]:
    """Distance and coverage of an extracted skeleton against the true centerlines.

    ``mean_dist``/``hausdorff`` are the mean and max distance from extracted
    nodes to the 1 cm resampled centerlines.  ``completeness`` is the share
    of centerline samples, on segments at least ``p_t`` voxel diagonals
    long, lying within two voxel diagonals of an extracted node.
    """
    nodes = np.asarray(getattr(extracted, "positions", extracted), dtype=np.float64).reshape(-1, 3)
    samples = truth.samples()
    if len(nodes) == 0 or len(samples) == 0:
        raise EmptyInput("skeleton accuracy needs nodes and centerlines")
    d, _ = cKDTree(samples).query(nodes)
    scored = truth.samples(min_length=p_t * voxel_diagonal)
    if len(scored) == 0:
        scored = samples
    cover, _ = cKDTree(nodes).query(scored)
    return {
        "mean_dist": float(d.mean()),
        "hausdorff": float(d.max()),
        "completeness": float(np.mean(cover <= 2 * voxel_diagonal)),
    }
