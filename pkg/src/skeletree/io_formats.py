"""Point-cloud readers and skeleton/cloud writers.

Supported inputs are whitespace-separated XYZ text (``x y z [intensity]``,
``#`` comments) and PLY (ascii or binary little-endian).  Skeletons are
written as OBJ polylines, PLY vertex+edge elements, or JSON.
"""

from __future__ import annotations

import io
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import EmptyCloud, ParseError
from .skeleton_graph import SkeletonGraph

__all__ = [
    "Point3I",
    "PointCloud",
    "load_cloud",
    "export_cloud",
    "export_skeleton",
    "load_skeleton",
]

TEXT_DECIMALS = 6

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
INTENSITY_NAMES = ("intensity", "scalar_intensity")


@dataclass(frozen=True)
class Point3I:
    x: float
    y: float
    z: float
    intensity: float | None = None

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError("point coordinates must be finite")


@dataclass
class PointCloud:
    """Columnar point cloud: ``xyz`` is ``(n, 3)``, ``intensity`` is ``(n,)`` or None.

    ``bad_lines`` holds the 1-based line numbers skipped by a lenient text
    load.
    """

    xyz: np.ndarray
    intensity: np.ndarray | None = None
    source_path: str = ""
    bad_lines: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.xyz = np.ascontiguousarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if self.intensity is not None:
            self.intensity = np.ascontiguousarray(self.intensity, dtype=np.float64).reshape(-1)
            if len(self.intensity) != len(self.xyz):
                raise ValueError("intensity length differs from point count")

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def has_intensity(self) -> bool:
        return self.intensity is not None

    @property
    def points(self) -> list[Point3I]:
        inten = self.intensity
        return [
            Point3I(*map(float, p), None if inten is None else float(inten[n]))
            for n, p in enumerate(self.xyz)
        ]

    @classmethod
    def from_points(cls, points, source_path: str = "") -> "PointCloud":
        points = list(points)
        xyz = np.array([[p.x, p.y, p.z] for p in points], dtype=np.float64).reshape(-1, 3)
        inten = None
        if points and all(p.intensity is not None for p in points):
            inten = np.array([p.intensity for p in points], dtype=np.float64)
        return cls(xyz, inten, source_path)

    def subset(self, selector) -> "PointCloud":
        inten = None if self.intensity is None else self.intensity[selector]
        return PointCloud(self.xyz[selector], inten, self.source_path)


# --------------------------------------------------------------------------
# reading
# --------------------------------------------------------------------------

def load_cloud(
    path: str | os.PathLike,
    format: Literal["auto", "xyz_text", "ply"] = "auto",
    strict: bool = True,
) -> PointCloud:
    """Load a point cloud.

    With ``strict=False`` malformed XYZ lines are skipped and their line
    numbers collected in ``PointCloud.bad_lines`` instead of raising.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    if format == "auto":
        format = _sniff(path)
    if format == "ply":
        cloud = _read_ply(path)
    elif format == "xyz_text":
        cloud = _read_xyz(path, strict)
    else:
        raise ValueError(f"unknown cloud format {format!r}")
    if len(cloud) == 0:
        raise EmptyCloud(f"{path}: no valid points")
    return cloud


def _sniff(path: Path) -> str:
    # the magic line wins over the extension
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head in (b"ply\n", b"ply\r") or path.suffix.lower() == ".ply":
        return "ply"
    return "xyz_text"


def _parse_xyz_line(tokens: list[str]) -> tuple[list[float], float | None]:
    if len(tokens) < 3:
        raise ValueError("expected at least 3 columns")
    xyz = [float(t) for t in tokens[:3]]
    if not all(math.isfinite(v) for v in xyz):
        raise ValueError("non-finite coordinate")
    inten = None
    if len(tokens) >= 4:
        inten = float(tokens[3])
        if not math.isfinite(inten):
            raise ValueError("non-finite intensity")
    return xyz, inten


def _read_xyz(path: Path, strict: bool) -> PointCloud:
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a text file", offset=exc.start) from None
    fast = _read_xyz_fast(text)
    if fast is not None:
        xyz, inten = fast
        return PointCloud(xyz, inten, str(path))

    coords: list[list[float]] = []
    intens: list[float | None] = []
    bad: list[int] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            xyz, inten = _parse_xyz_line(s.replace(",", " ").split())
        except ValueError as exc:
            if strict:
                raise ParseError(f"{path}: {exc}", line=lineno) from None
            bad.append(lineno)
            continue
        coords.append(xyz)
        intens.append(inten)
    inten_arr = None
    if intens and all(v is not None for v in intens):
        inten_arr = np.array(intens, dtype=np.float64)
    return PointCloud(np.array(coords, dtype=np.float64).reshape(-1, 3), inten_arr, str(path), bad)


def _read_xyz_fast(text: str):
    """Vectorized parse for well-formed files; None means take the slow path."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty input
            data = np.loadtxt(io.StringIO(text), comments="#", ndmin=2, dtype=np.float64)
    except ValueError:
        return None
    if data.size == 0 or data.shape[1] < 3 or not np.all(np.isfinite(data[:, :4])):
        return None
    inten = data[:, 3].copy() if data.shape[1] >= 4 else None
    return np.ascontiguousarray(data[:, :3]), inten


def _read_ply_header(fh) -> tuple[str, list[dict]]:
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise ParseError("missing 'ply' magic", offset=0)
    fmt = None
    elements: list[dict] = []
    while True:
        raw = fh.readline()
        if not raw:
            raise ParseError("unterminated PLY header", offset=fh.tell())
        tokens = raw.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "format":
            fmt = tokens[1]
        elif key == "element":
            elements.append({"name": tokens[1], "count": int(tokens[2]), "props": []})
        elif key == "property":
            if not elements:
                raise ParseError("property before element", offset=fh.tell())
            if tokens[1] == "list":
                elements[-1]["props"].append((tokens[4], "list", tokens[2], tokens[3]))
            else:
                if tokens[1] not in PLY_TYPES:
                    raise ParseError(f"unknown PLY type {tokens[1]}", offset=fh.tell())
                elements[-1]["props"].append((tokens[2], "scalar", tokens[1], None))
        elif key == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"unsupported PLY format {fmt!r}", offset=0)
    return fmt, elements


def _read_ply_elements(path: Path) -> dict[str, dict[str, np.ndarray | list]]:
    with open(path, "rb") as fh:
        fmt, elements = _read_ply_header(fh)
        body = fh.read()
    out: dict[str, dict] = {}
    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        pos = 0
        for el in elements:
            cols: dict[str, list] = {name: [] for name, *_ in el["props"]}
            for r in range(el["count"]):
                while pos < len(lines) and not lines[pos].strip():
                    pos += 1
                if pos >= len(lines):
                    raise ParseError(f"truncated element {el['name']}", line=r)
                tokens = lines[pos].split()
                pos += 1
                t = 0
                try:
                    for name, kind, ptype, itype in el["props"]:
                        if kind == "list":
                            cnt = int(tokens[t])
                            cols[name].append([float(v) for v in tokens[t + 1 : t + 1 + cnt]])
                            t += 1 + cnt
                        else:
                            cols[name].append(float(tokens[t]))
                            t += 1
                except (ValueError, IndexError):
                    raise ParseError(f"malformed {el['name']} record", line=r) from None
            out[el["name"]] = {
                k: (np.array(v) if el["props"] and v and not isinstance(v[0], list) else v)
                for k, v in cols.items()
            }
        return out

    off = 0
    for el in elements:
        if all(kind == "scalar" for _, kind, _, _ in el["props"]):
            dtype = np.dtype([(name, "<" + PLY_TYPES[pt]) for name, _, pt, _ in el["props"]])
            size = dtype.itemsize * el["count"]
            if off + size > len(body):
                raise ParseError(f"truncated element {el['name']}", offset=off)
            arr = np.frombuffer(body, dtype=dtype, count=el["count"], offset=off)
            off += size
            out[el["name"]] = {name: arr[name].astype(np.float64) for name in dtype.names}
            continue
        cols = {name: [] for name, *_ in el["props"]}
        for _ in range(el["count"]):
            for name, kind, ptype, itype in el["props"]:
                if kind == "list":
                    cdt = np.dtype("<" + PLY_TYPES[ptype])
                    cnt = int(np.frombuffer(body, cdt, 1, off)[0])
                    off += cdt.itemsize
                    idt = np.dtype("<" + PLY_TYPES[itype])
                    cols[name].append(np.frombuffer(body, idt, cnt, off).tolist())
                    off += idt.itemsize * cnt
                else:
                    sdt = np.dtype("<" + PLY_TYPES[ptype])
                    cols[name].append(float(np.frombuffer(body, sdt, 1, off)[0]))
                    off += sdt.itemsize
        out[el["name"]] = cols
    return out


def _read_ply(path: Path) -> PointCloud:
    elements = _read_ply_elements(path)
    vertex = elements.get("vertex")
    if vertex is None or not all(k in vertex for k in "xyz"):
        raise ParseError(f"{path}: PLY needs a vertex element with x, y, z")
    xyz = np.stack([np.asarray(vertex[k], dtype=np.float64) for k in "xyz"], axis=1)
    bad = np.flatnonzero(~np.all(np.isfinite(xyz), axis=1))
    if len(bad):
        raise ParseError(f"{path}: non-finite vertex", line=int(bad[0]))
    inten = None
    for name in INTENSITY_NAMES:
        if name in vertex:
            inten = np.asarray(vertex[name], dtype=np.float64)
            break
    return PointCloud(xyz, inten, str(path))


# --------------------------------------------------------------------------
# writing
# --------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.{TEXT_DECIMALS}f}"


def export_cloud(
    cloud: PointCloud,
    path: str | os.PathLike,
    format: Literal["xyz_text", "ply_ascii", "ply_binary"] = "ply_binary",
) -> None:
    """Write a cloud.

    XYZ text uses 6 decimals.  PLY stores float64 coordinates; the ascii
    variant prints shortest round-trip representations so a reload is
    bit-identical.
    """
    path = Path(path)
    has_i = cloud.intensity is not None
    if format == "xyz_text":
        data = cloud.xyz if not has_i else np.column_stack([cloud.xyz, cloud.intensity])
        with open(path, "w") as fh:
            np.savetxt(fh, data, fmt=f"%.{TEXT_DECIMALS}f")
        return
    header = ["ply", f"format {'ascii' if format == 'ply_ascii' else 'binary_little_endian'} 1.0",
              f"element vertex {len(cloud)}",
              "property double x", "property double y", "property double z"]
    if has_i:
        header.append("property double intensity")
    header.append("end_header")
    if format == "ply_ascii":
        with open(path, "w") as fh:
            fh.write("\n".join(header) + "\n")
            for n, p in enumerate(cloud.xyz):
                vals = list(p) + ([cloud.intensity[n]] if has_i else [])
                fh.write(" ".join(repr(float(v)) for v in vals) + "\n")
    elif format == "ply_binary":
        names = ["x", "y", "z"] + (["intensity"] if has_i else [])
        rec = np.empty(len(cloud), dtype=[(nm, "<f8") for nm in names])
        for a, nm in enumerate("xyz"):
            rec[nm] = cloud.xyz[:, a]
        if has_i:
            rec["intensity"] = cloud.intensity
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(rec.tobytes())
    else:
        raise ValueError(f"unknown cloud format {format!r}")


def skeleton_to_dict(graph: SkeletonGraph) -> dict:
    return {
        "nodes": [[round(float(c), TEXT_DECIMALS) for c in p] for p in graph.positions],
        "edges": [[int(i), int(j)] for i, j in sorted(graph.edges)],
        "branches": [int(b) for b in graph.branch_labels],
    }


def export_skeleton(
    graph: SkeletonGraph,
    path: str | os.PathLike,
    format: Literal["obj_lines", "ply_edges", "json"] = "json",
) -> None:
    if graph.n_nodes < 1:
        raise ValueError("cannot export a skeleton without nodes")
    path = Path(path)
    edges = sorted(graph.edges)
    if format == "obj_lines":
        lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in graph.positions]
        lines += [f"l {i + 1} {j + 1}" for i, j in edges]
        path.write_text("\n".join(lines) + "\n")
    elif format == "ply_edges":
        lines = ["ply", "format ascii 1.0", f"element vertex {graph.n_nodes}",
                 "property double x", "property double y", "property double z",
                 f"element edge {len(edges)}", "property int vertex1", "property int vertex2",
                 "end_header"]
        lines += [f"{_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in graph.positions]
        lines += [f"{i} {j}" for i, j in edges]
        path.write_text("\n".join(lines) + "\n")
    elif format == "json":
        path.write_text(json.dumps(skeleton_to_dict(graph), separators=(",", ":")) + "\n")
    else:
        raise ValueError(f"unknown skeleton format {format!r}")


def skeleton_format_for(path: str | os.PathLike) -> str:
    ext = Path(path).suffix.lower()
    return {".obj": "obj_lines", ".ply": "ply_edges", ".json": "json"}.get(ext, "json")


def load_skeleton(path: str | os.PathLike, format: str = "auto") -> SkeletonGraph:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    if format == "auto":
        format = skeleton_format_for(path)
    if format == "json":
        try:
            data = json.loads(path.read_text())
            nodes = np.asarray(data["nodes"], dtype=np.float64).reshape(-1, 3)
            edges = {(int(i), int(j)) for i, j in data["edges"]}
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"{path}: bad skeleton json ({exc})") from None
        return SkeletonGraph(nodes, edges)
    if format == "obj_lines":
        verts, edges = [], set()
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            tok = line.split()
            if not tok:
                continue
            try:
                if tok[0] == "v":
                    verts.append([float(t) for t in tok[1:4]])
                elif tok[0] == "l":
                    ids = [int(t) - 1 for t in tok[1:]]
                    for a, b in zip(ids, ids[1:]):
                        edges.add((a, b))
            except ValueError:
                raise ParseError(f"{path}: malformed OBJ record", line=lineno) from None
        return SkeletonGraph(np.array(verts).reshape(-1, 3), edges)
    if format == "ply_edges":
        el = _read_ply_elements(path)
        v = el["vertex"]
        xyz = np.stack([np.asarray(v[k], dtype=np.float64) for k in "xyz"], axis=1)
        e = el.get("edge", {})
        edges = set()
        if e:
            edges = {(int(a), int(b)) for a, b in zip(e["vertex1"], e["vertex2"])}
        return SkeletonGraph(xyz, edges)
    raise ValueError(f"unknown skeleton format {format!r}")
