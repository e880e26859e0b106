"""Command-line entry point: ``skeletree extract|synth|bench|export``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .breakpoint import ConnectParams
from .errors import InvalidSpec, SkeletreeError
from .gsa import GsaParams
from .io_formats import export_cloud, export_skeleton, load_cloud, load_skeleton, skeleton_format_for
from .metrics import RunReport, emit_report
from .pipeline import PipelineConfig, RefineConfig, run_ftsem, run_gsa
from .synth import default_tree_spec, generate, load_tree_spec
from .wood_leaf import FilterConfig

__all__ = ["main", "build_parser", "pipeline_config", "CONFIG_KEYS"]

log = logging.getLogger("skeletree")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
CONFIG_VERSION = 1

# config-file key -> default; flags use the same names with dashes
CONFIG_KEYS: dict[str, object] = {
    "algo": "ftsem",
    "filter_method": "auto",
    "fixed_threshold": None,
    "density_ratio": 0.25,
    "invert_intensity": False,
    "n_divisions": 100,
    "wood_voxel_ratio": 0.25,
    "max_thinning_passes": None,
    "close_gaps": True,
    "fill_holes": True,
    "pt": 4,
    "theta_t": 120.0,
    "k_candidates": 5,
    "bd_factor": 3.0,
    "candidates": "any",
    "breakpoint_connection": True,
    "slice_thickness": None,
    "residual_switch": 0.15,
    "smooth_lambda": 0.5,
    "smooth_iters": 3,
    "refine": True,
    "gsa_knn": 8,
    "gsa_bin_width": 0.2,
}

CLOUD_SUFFIXES = (".xyz", ".txt", ".asc", ".pts", ".ply")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--config", type=Path, help="JSON config file; flags override it")
    g.add_argument("--algo", choices=["ftsem", "gsa"])
    g.add_argument("--filter-method",
                   choices=["auto", "intensity_otsu", "intensity_fixed", "density_only", "passthrough"])
    g.add_argument("--fixed-threshold", type=float)
    g.add_argument("--density-ratio", type=float)
    g.add_argument("--invert-intensity", action="store_const", const=True)
    g.add_argument("--n-divisions", type=int)
    g.add_argument("--wood-voxel-ratio", type=float)
    g.add_argument("--max-thinning-passes", type=int)
    g.add_argument("--no-close-gaps", dest="close_gaps", action="store_const", const=False)
    g.add_argument("--no-fill-holes", dest="fill_holes", action="store_const", const=False)
    g.add_argument("--pt", type=int)
    g.add_argument("--theta-t", type=float)
    g.add_argument("--k-candidates", type=int)
    g.add_argument("--bd-factor", type=float)
    g.add_argument("--candidates", choices=["any", "endpoints-only"])
    g.add_argument("--no-breakpoint-connection", dest="breakpoint_connection",
                   action="store_const", const=False)
    g.add_argument("--slice-thickness", type=float)
    g.add_argument("--residual-switch", type=float)
    g.add_argument("--smooth-lambda", type=float)
    g.add_argument("--smooth-iters", type=int)
    g.add_argument("--no-refine", dest="refine", action="store_const", const=False)
    g.add_argument("--gsa-knn", type=int)
    g.add_argument("--gsa-bin-width", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skeletree", description="Curve skeletons from tree point clouds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("extract", help="one cloud to a skeleton and an optional report")
    ex.add_argument("--in", dest="input", type=Path, required=True)
    ex.add_argument("--out", type=Path, required=True, help=".obj, .ply or .json")
    ex.add_argument("--report", type=Path, help=".csv or .json")
    ex.add_argument("--format", choices=["auto", "xyz_text", "ply"], default="auto")
    ex.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")
    _add_pipeline_flags(ex)

    sy = sub.add_parser("synth", help="generate synthetic trees")
    sy.add_argument("--spec", type=Path, help="TreeSpec JSON (default: depth-3 tree)")
    sy.add_argument("--out", type=Path, help="cloud file for a single tree")
    sy.add_argument("--truth", type=Path, help="ground-truth JSON for a single tree")
    sy.add_argument("--count", type=int, help="write a corpus of this many trees")
    sy.add_argument("--out-dir", type=Path, help="corpus directory")
    sy.add_argument("--seed", type=int, help="seed (first seed for a corpus)")
    sy.add_argument("--points-per-m2", type=float)

    be = sub.add_parser("bench", help="both algorithms over a directory of clouds")
    be.add_argument("--dir", type=Path, required=True)
    be.add_argument("--report", type=Path, required=True, help=".csv or .json")
    be.add_argument("--no-gsa", action="store_true")
    _add_pipeline_flags(be)

    xp = sub.add_parser("export", help="convert skeleton formats")
    xp.add_argument("--in", dest="input", type=Path, required=True)
    xp.add_argument("--out", type=Path, required=True)
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    merged = dict(CONFIG_KEYS)
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        if data.get("version") != CONFIG_VERSION:
            raise UsageError(f"config version must be {CONFIG_VERSION}")
        unknown = set(data) - set(CONFIG_KEYS) - {"version"}
        if unknown:
            raise UsageError(f"unknown config fields: {sorted(unknown)}")
        merged.update({k: v for k, v in data.items() if k != "version"})
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def pipeline_config(opts: dict, has_intensity: bool = True) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from resolved options.

    ``filter_method="auto"`` picks Otsu on intensity when the cloud has
    intensity and the voxel-density test otherwise.
    """
    method = opts["filter_method"]
    if method == "auto":
        method = "intensity_otsu" if has_intensity else "density_only"
    try:
        return PipelineConfig(
            filter=FilterConfig(
                method=method,
                fixed_threshold=opts["fixed_threshold"],
                density_ratio_threshold=opts["density_ratio"],
                invert_intensity=bool(opts["invert_intensity"]),
                n_divisions=opts["n_divisions"],
            ),
            n_divisions=opts["n_divisions"],
            wood_voxel_ratio=opts["wood_voxel_ratio"],
            connect=ConnectParams(
                p_t=opts["pt"], theta_t=opts["theta_t"], k_candidates=opts["k_candidates"],
                bd_factor=opts["bd_factor"], candidates=opts["candidates"],
            ),
            refine=RefineConfig(
                slice_thickness=opts["slice_thickness"],
                residual_switch=opts["residual_switch"],
                smooth_lambda=opts["smooth_lambda"],
                smooth_iters=opts["smooth_iters"],
            ),
            close_gaps=bool(opts["close_gaps"]),
            fill_holes=bool(opts["fill_holes"]),
            max_thinning_passes=opts["max_thinning_passes"],
            enable_connect=bool(opts["breakpoint_connection"]),
            enable_recenter=bool(opts["refine"]),
            enable_smooth=bool(opts["refine"]),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid option: {exc}") from None


def _gsa_params(opts: dict) -> GsaParams:
    try:
        return GsaParams(knn=opts["gsa_knn"], bin_width=opts["gsa_bin_width"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid option: {exc}") from None


def _report_format(path: Path) -> str:
    return "json" if path.suffix.lower() == ".json" else "csv"


def _cmd_extract(args) -> int:
    opts = _resolve(args)
    cloud = load_cloud(args.input, args.format, strict=not args.lenient)
    if cloud.bad_lines:
        log.warning("%d malformed lines skipped", len(cloud.bad_lines))
    cfg = pipeline_config(opts, cloud.has_intensity)
    tree_id = args.input.stem
    if opts["algo"] == "gsa":
        filt = cfg.filter if cfg.enable_filter else None
        graph, runtime = run_gsa(cloud, _gsa_params(opts), filt)
        report = RunReport(tree_id, len(cloud), graph.n_nodes, runtime,
                           residual_branch_count=graph.n_branches)
    else:
        res = run_ftsem(cloud, cfg, tree_id)
        graph, report = res.graph, res.report
    export_skeleton(graph, args.out, skeleton_format_for(args.out))
    if args.report is not None:
        emit_report([report], args.report, _report_format(args.report))
    log.info("%s: %d nodes, %d branches, %.3f s", tree_id, graph.n_nodes, graph.n_branches, report.runtime_s)
    return EXIT_OK


def _cmd_synth(args) -> int:
    try:
        base = load_tree_spec(args.spec) if args.spec else default_tree_spec()
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read spec {args.spec}: {exc}") from None
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.points_per_m2 is not None:
        overrides["points_per_m2"] = args.points_per_m2
    base = replace(base, **overrides)
    base.validate()

    if args.count is None:
        if args.out is None:
            raise UsageError("synth needs --out (or --count with --out-dir)")
        _write_tree(base, args.out, args.truth)
        return EXIT_OK
    if args.count < 1 or args.out_dir is None:
        raise UsageError("--count needs a positive value and --out-dir")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        spec = replace(base, seed=base.seed + k)
        stem = f"tree_{k:03d}"
        _write_tree(spec, args.out_dir / f"{stem}.xyz", args.out_dir / f"{stem}.truth.json")
    return EXIT_OK


def _write_tree(spec, out: Path, truth_path: Path | None) -> None:
    cloud, truth = generate(spec)
    fmt = "ply_binary" if out.suffix.lower() == ".ply" else "xyz_text"
    export_cloud(cloud, out, fmt)
    if truth_path is not None:
        doc = {"spec": spec.to_json(), **truth.to_json()}
        truth_path.write_text(json.dumps(doc) + "\n")
    log.info("wrote %s (%d points)", out, len(cloud))


def _cmd_bench(args) -> int:
    opts = _resolve(args)
    if not args.dir.is_dir():
        raise FileNotFoundError(f"not a directory: {args.dir}")
    files = sorted(p for p in args.dir.iterdir() if p.suffix.lower() in CLOUD_SUFFIXES)
    if not files:
        raise SkeletreeError(f"no point clouds in {args.dir}")
    gsa = _gsa_params(opts)
    reports = []
    for path in files:
        cloud = load_cloud(path)
        cfg = pipeline_config(opts, cloud.has_intensity)
        rep = run_ftsem(cloud, cfg, path.stem).report
        if not args.no_gsa:
            g, t = run_gsa(cloud, gsa, cfg.filter)
            rep.node_count_gsa, rep.runtime_gsa_s = g.n_nodes, t
        log.info("%s: ftsem %.3f s, tpmp %.2f", path.stem, rep.runtime_s, rep.tpmp_s)
        reports.append(rep)
    emit_report(reports, args.report, _report_format(args.report))
    return EXIT_OK


def _cmd_export(args) -> int:
    graph = load_skeleton(args.input)
    export_skeleton(graph, args.out, skeleton_format_for(args.out))
    return EXIT_OK


COMMANDS = {"extract": _cmd_extract, "synth": _cmd_synth, "bench": _cmd_bench, "export": _cmd_export}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"skeletree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidSpec as exc:
        print(f"skeletree: invalid tree spec: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SkeletreeError, OSError) as exc:
        stage = getattr(exc, "stage", None)
        where = f" [{stage}]" if stage else ""
        print(f"skeletree: {type(exc).__name__}{where}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
