"""Timing, time per million points, and tabular run reports."""

from __future__ import annotations

import csv
import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Literal

from .errors import InvalidCount

__all__ = ["RunReport", "StageTimer", "compute_tpmp", "emit_report", "CSV_COLUMNS"]

CSV_COLUMNS = [
    "tree_id", "point_count",
    "node_count_ftsem", "node_count_gsa",
    "runtime_ftsem", "runtime_gsa",
    "tpmp_ftsem", "tpmp_gsa",
]


def compute_tpmp(runtime_s: float, point_count: int) -> float:
    """Seconds per million points."""
    if int(point_count) != point_count or point_count < 1:
        raise InvalidCount(f"point_count must be a positive integer, got {point_count}")
    if runtime_s < 0:
        raise InvalidCount(f"runtime must be non-negative, got {runtime_s}")
    return runtime_s * 1e6 / point_count


@dataclass
class RunReport:
    tree_id: str
    point_count: int
    node_count: int
    runtime_s: float
    tpmp_s: float = field(init=False)
    stage_timings: dict[str, float] = field(default_factory=dict)
    residual_branch_count: int = 0
    raw_branch_count: int = 0
    node_count_gsa: int | None = None
    runtime_gsa_s: float | None = None

    def __post_init__(self):
        self.tpmp_s = compute_tpmp(self.runtime_s, self.point_count)

    @property
    def tpmp_gsa_s(self) -> float | None:
        if self.runtime_gsa_s is None:
            return None
        return compute_tpmp(self.runtime_gsa_s, self.point_count)

    def to_json(self) -> dict:
        d = asdict(self)
        d["tpmp_gsa_s"] = self.tpmp_gsa_s
        return d


class StageTimer:
    """Accumulates monotonic wall-clock time per named stage."""

    def __init__(self):
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        t = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._t0


def _mean(values):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def emit_report(
    reports: list[RunReport],
    path: str | os.PathLike,
    format: Literal["csv", "json"] = "csv",
) -> None:
    """Write one row per tree plus an average-TPMP footer.

    CSV rows show TPMP rounded to 0.1 s and the footer is the mean of those
    shown values.  JSON keeps full precision throughout.
    """
    if not reports:
        raise ValueError("no reports to emit")
    path = Path(path)
    if format == "json":
        doc = {
            "rows": [r.to_json() for r in reports],
            "average_tpmp": {
                "ftsem": _mean(r.tpmp_s for r in reports),
                "gsa": _mean(r.tpmp_gsa_s for r in reports),
            },
        }
        path.write_text(json.dumps(doc, indent=2) + "\n")
        return
    if format != "csv":
        raise ValueError(f"unknown report format {format!r}")

    def opt(v, fmt):
        return "" if v is None else fmt.format(v)

    shown_f = [round(r.tpmp_s, 1) for r in reports]
    shown_g = [None if r.tpmp_gsa_s is None else round(r.tpmp_gsa_s, 1) for r in reports]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r, tf, tg in zip(reports, shown_f, shown_g):
            w.writerow([
                r.tree_id, r.point_count, r.node_count, opt(r.node_count_gsa, "{}"),
                f"{r.runtime_s:.3f}", opt(r.runtime_gsa_s, "{:.3f}"),
                f"{tf:.1f}", opt(tg, "{:.1f}"),
            ])
        avg_g = _mean(shown_g)
        w.writerow(["Average TPMP", "", "", "", "", "",
                    repr(_mean(shown_f)), "" if avg_g is None else repr(avg_g)])
