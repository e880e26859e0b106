"""Rule-based joining of separated skeleton fragments to the main branch.

For a fragment breakpoint A and a main-branch node B three line vectors are
fitted: ``m`` through A and its two closest linked neighbors (pointing into
A's fragment), ``n`` through B and its linked neighbors (pointing into B's
branch), and ``l`` through all of them (pointing from A to B).  A join is
accepted when m/n and m/l are obtuse enough and n/l acute enough; otherwise
the nearest main node M whose m/n angle exceeds the threshold is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateFit
from .skeleton_graph import Branch, SkeletonGraph, branches_sorted, find_breakpoints

__all__ = [
    "ConnectParams",
    "ConnectionGeometry",
    "Connection",
    "ConnectResult",
    "fit_direction",
    "connection_geometry",
    "passes_angle_gate",
    "prefers_m_node",
    "select_main_branch",
    "connect_branches",
    "connect_all",
]

_EPS = 1e-12


@dataclass(frozen=True)
class ConnectParams:
    p_t: int = 4
    theta_t: float = 120.0
    k_candidates: int = 5
    bd_factor: float = 3.0
    candidates: Literal["any", "endpoints-only"] = "any"

    def __post_init__(self):
        if self.p_t < 1:
            raise ValueError("p_t must be >= 1")
        if not 90 < self.theta_t < 180:
            raise ValueError("theta_t must lie in (90, 180) degrees")
        if self.k_candidates < 1:
            raise ValueError("k_candidates must be >= 1")
        if self.bd_factor <= 0:
            raise ValueError("bd_factor must be positive")
        if self.candidates not in ("any", "endpoints-only"):
            raise ValueError(f"unknown candidate mode {self.candidates!r}")

    @property
    def cos_theta(self) -> float:
        return math.cos(math.radians(self.theta_t))


@dataclass(frozen=True)
class ConnectionGeometry:
    bd: float
    cos_alpha: float
    cos_beta: float
    cos_gamma: float
    m_dir: np.ndarray
    n_dir: np.ndarray
    l_dir: np.ndarray


@dataclass(frozen=True)
class Connection:
    branch_id: int
    breakpoint: int
    target: int
    kind: Literal["gate", "M"]
    geometry: ConnectionGeometry


@dataclass
class ConnectResult:
    graph: SkeletonGraph
    main_branch: int | None
    connections: list[Connection] = field(default_factory=list)


def _principal(points: np.ndarray) -> np.ndarray:
    centered = points - points.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(float(np.abs(points).max()), 1.0)
    if s[0] <= 1e-12 * scale:
        raise DegenerateFit("points coincide; no direction to fit")
    return vt[0]


def fit_direction(points, orient_toward) -> np.ndarray:
    """Least-squares line direction, signed to agree with ``orient_toward``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 2:
        raise DegenerateFit("need at least two points")
    d = _principal(pts)
    sense = np.asarray(orient_toward, dtype=np.float64).reshape(3)
    if d @ sense < 0:
        d = -d
    return d / np.linalg.norm(d)


def connection_geometry(a_pts, b_pts, a_sense=None, b_sense=None) -> ConnectionGeometry:
    """Geometry between breakpoint ``a_pts[0]`` and node ``b_pts[0]``.

    ``a_pts``/``b_pts`` hold the node followed by its linked neighbors.  By
    default each local vector points from the node toward the centroid of
    its neighbors; pass ``a_sense``/``b_sense`` to override.
    """
    a = np.asarray(a_pts, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b_pts, dtype=np.float64).reshape(-1, 3)
    if a_sense is None:
        a_sense = a[1:].mean(axis=0) - a[0]
    if b_sense is None:
        b_sense = b[1:].mean(axis=0) - b[0]
    m = fit_direction(a, a_sense)
    n = fit_direction(b, b_sense)
    ab = b[0] - a[0]
    l_sense = ab if np.linalg.norm(ab) > _EPS else b.mean(axis=0) - a.mean(axis=0)
    l = fit_direction(np.vstack([a, b]), l_sense)
    return ConnectionGeometry(
        float(np.linalg.norm(ab)),
        float(np.clip(m @ n, -1, 1)),
        float(np.clip(m @ l, -1, 1)),
        float(np.clip(n @ l, -1, 1)),
        m, n, l,
    )


def passes_angle_gate(geom: ConnectionGeometry, theta_t: float) -> bool:
    c = math.cos(math.radians(theta_t))
    return geom.cos_alpha <= c and geom.cos_beta <= c and geom.cos_gamma >= abs(c)


def prefers_m_node(q_min: ConnectionGeometry, m_geom: ConnectionGeometry, bd_factor: float) -> bool:
    return q_min.cos_alpha <= m_geom.cos_alpha and q_min.bd <= bd_factor * m_geom.bd


def select_main_branch(branches: list[Branch], positions: np.ndarray | None = None) -> int:
    """Of the two largest branches, the one reaching lowest.

    ``branches`` must already be sorted by :func:`branches_sorted`.  Branch
    ``min_z`` is read from ``positions`` when given, else from a ``min_z``
    attribute on the branch objects.
    """
    if not branches:
        raise ValueError("no branches")
    top = branches[:2]

    def low(b):
        if positions is not None:
            return float(positions[b.min_z_node, 2])
        return float(b.min_z)

    return min(top, key=lambda b: (low(b), b.id)).id


class _Linker:
    """Linked-neighbor lookup and cached local directions for every node."""

    def __init__(self, graph: SkeletonGraph):
        self.pos = graph.positions
        self.adj = [set(a) for a in graph.adjacency()]
        n = len(self.pos)
        self.u = np.zeros((n, 3))
        self.into = np.zeros((n, 3))
        self.valid = np.zeros(n, dtype=bool)
        self.refresh(range(n))

    def degree(self, i: int) -> int:
        return len(self.adj[i])

    def linked(self, i: int) -> list[int]:
        """The node's two closest linked neighbors.

        A chain end uses its neighbor and that neighbor's next node along
        the chain; an inner node uses its two nearest graph neighbors.
        """
        nbrs = sorted(self.adj[i])
        if not nbrs:
            return []
        p = self.pos
        if len(nbrs) == 1:
            c = nbrs[0]
            rest = sorted(self.adj[c] - {i})
            if not rest:
                return [c]
            d = min(rest, key=lambda r: (float(np.sum((p[r] - p[c]) ** 2)), r))
            return [c, d]
        nbrs.sort(key=lambda r: (float(np.sum((p[r] - p[i]) ** 2)), r))
        return nbrs[:2]

    def points(self, i: int) -> np.ndarray:
        return self.pos[[i] + self.linked(i)]

    def refresh(self, nodes) -> None:
        nodes = list(nodes)
        if not nodes:
            return
        stack = np.empty((len(nodes), 3, 3))
        has = np.zeros(len(nodes), dtype=bool)
        for r, i in enumerate(nodes):
            lk = self.linked(i)
            if not lk:
                stack[r] = self.pos[i]
                continue
            has[r] = True
            stack[r, 0] = self.pos[i]
            stack[r, 1] = self.pos[lk[0]]
            stack[r, 2] = self.pos[lk[-1]]
        centered = stack - stack.mean(axis=1, keepdims=True)
        _, s, vt = np.linalg.svd(centered)
        u = vt[:, 0, :]
        ok = has & (s[:, 0] > 1e-12)
        idx = np.asarray(nodes)
        self.u[idx] = u
        self.valid[idx] = ok
        self.into[idx] = stack[:, 1:, :].mean(axis=1) - stack[:, 0, :]

    def refresh_around(self, a: int, b: int) -> None:
        near = {a, b}
        for _ in range(2):
            near |= {nb for v in list(near) for nb in self.adj[v]}
        self.refresh(sorted(near))

    def add_edge(self, a: int, b: int) -> None:
        self.adj[a].add(b)
        self.adj[b].add(a)
        self.refresh_around(a, b)

    def sense(self, node: int, other: int) -> np.ndarray:
        """Orientation sense of ``node``'s local vector as seen from ``other``.

        Chain ends point into their own branch.  Inner nodes have no inward
        side, so they point away from ``other``.
        """
        if self.degree(node) <= 1:
            return self.into[node]
        d = self.pos[node] - self.pos[other]
        return d if np.linalg.norm(d) > _EPS else self.into[node]

    def geometry(self, a: int, b: int) -> ConnectionGeometry:
        return connection_geometry(
            self.points(a), self.points(b), self.sense(a, b), self.sense(b, a)
        )

    def cos_alpha_all(self, a: int, m: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """cos(alpha) between ``m`` and every target's oriented local vector."""
        u = self.u[targets]
        deg = np.array([self.degree(t) for t in targets])
        away = self.pos[targets] - self.pos[a]
        away_ok = np.linalg.norm(away, axis=1) > _EPS
        ref = np.where(((deg >= 2) & away_ok)[:, None], away, self.into[targets])
        sign = np.where(np.einsum("ij,ij->i", u, ref) < 0, -1.0, 1.0)
        cos = (u * sign[:, None]) @ m
        return np.where(self.valid[targets], cos, np.nan)


def connect_branches(graph: SkeletonGraph, params: ConnectParams = ConnectParams()) -> ConnectResult:
    """Join fragments to the main branch, bottom to top.

    Fragments with at most ``p_t`` nodes are skipped.  For the remaining
    fragments only the lowest breakpoint with a usable local direction is
    tried: it is joined to the closest of the ``k_candidates`` nearest main
    nodes that passes the angle gate, or to the M node (nearest main node
    with an obtuse enough m/n angle) when no candidate passes or when the
    candidate loses the distance/angle comparison against M.  Joined
    fragments become part of the main branch for later fragments.
    """
    out = graph.copy()
    if out.n_nodes == 0:
        return ConnectResult(out, None)
    order = branches_sorted(out)
    main_id = select_main_branch(order, out.positions)
    if len(order) == 1:
        return ConnectResult(out, main_id)

    cos_t = params.cos_theta
    z = out.positions[:, 2]
    linker = _Linker(out)
    in_main = out.branch_labels == main_id
    strays = sorted((b for b in order if b.id != main_id), key=lambda b: (z[b.min_z_node], b.id))
    result = ConnectResult(out, main_id)

    for branch in strays:
        if branch.node_count <= params.p_t:
            continue
        main_idx = np.flatnonzero(in_main)
        if params.candidates == "endpoints-only":
            deg = np.array([linker.degree(i) for i in main_idx])
            cand_pool = main_idx[deg <= 1]
        else:
            cand_pool = main_idx
        tree = cKDTree(out.positions[cand_pool]) if len(cand_pool) else None
        degrees = np.array([linker.degree(i) for i in range(out.n_nodes)])

        for p in find_breakpoints(out, branch, degrees):
            if not linker.valid[p]:
                continue
            a_pts = linker.points(p)
            m = fit_direction(a_pts, linker.into[p])

            # M: nearest main node with alpha strictly above the threshold
            cos_all = linker.cos_alpha_all(p, m, main_idx)
            ok = np.flatnonzero(cos_all < cos_t)
            m_node = None
            m_geom = None
            if len(ok):
                dist = np.linalg.norm(out.positions[main_idx[ok]] - out.positions[p], axis=1)
                m_node = int(main_idx[ok[np.lexsort((main_idx[ok], dist))[0]]])
                m_geom = linker.geometry(p, m_node)

            survivors: list[tuple[float, int, ConnectionGeometry]] = []
            if tree is not None:
                k = min(params.k_candidates, len(cand_pool))
                _, nn = tree.query(out.positions[p], k=k)
                for q in np.atleast_1d(nn):
                    q = int(cand_pool[q])
                    if not linker.valid[q]:
                        continue
                    geom = linker.geometry(p, q)
                    if passes_angle_gate(geom, params.theta_t):
                        survivors.append((geom.bd, q, geom))

            if not survivors:
                if m_node is not None:
                    _join(result, linker, in_main, branch, p, m_node, "M", m_geom)
                break
            bd_min, q_min, q_geom = min(survivors, key=lambda s: (s[0], s[1]))
            if m_node is None or prefers_m_node(q_geom, m_geom, params.bd_factor):
                _join(result, linker, in_main, branch, p, q_min, "gate", q_geom)
            else:
                _join(result, linker, in_main, branch, p, m_node, "M", m_geom)
            break

    out.relabel()
    return result


def _join(result, linker, in_main, branch, p, target, kind, geom) -> None:
    result.graph.add_edge(p, target)
    linker.add_edge(p, target)
    in_main[branch.node_indices] = True
    result.connections.append(Connection(branch.id, p, target, kind, geom))


def connect_all(graph: SkeletonGraph, params: ConnectParams = ConnectParams()) -> SkeletonGraph:
    return connect_branches(graph, params).graph
