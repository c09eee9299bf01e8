"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error. Options may also come
from a JSON or YAML file given with ``--config``; explicit flags win over
the file, which wins over built-in defaults. ``RICI_DATASET`` supplies the
default dataset directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clutterbox import (ClutterboxConfig, DatasetTooSmall, dumps_json, run_clutterbox, support_angle_ablation,
                         unique_vertex_array, write_outputs)
from .descriptor_io import read_descriptor_csv, write_descriptor_csv, write_pgm
from .loaders import load_mesh
from .mesh import OrientedPoint, normalize_to_unit_sphere, sample_point_cloud
from .rng import Prng
from .shape_context import ShapeContextParams, generate_shape_context, shape_context_distance
from .spin_image import generate_spin_image, pearson_distance
from .rici import crd_distance, generate_rici

log = logging.getLogger("rici")

DATASET_ENV = "RICI_DATASET"

DEFAULTS = {
    "seed": 0,
    "support_radius": 0.3,
    "resolution": 64,
    "samples_per_triangle": 10,
    "support_angle": None,
    "azimuth_bins": 15,
    "elevation_bins": 11,
    "radial_bins": 12,
    "r_min": 0.048,
    "box_side": 3.0,
    "counts": "1,5,10",
    "method": "rici",
    "clutter_samples": 100_000,
    "identity_reference": False,
    "angles": "60,180",
    "out": ".",
    "normalize": False,
    "threads": None,
    "anchors": 256,
    "objects": 5,
    "repeats": 3,
    "triangle_levels": "1,2,5,10",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _add_descriptor_options(p):
    p.add_argument("--support-radius", type=float, help="support radius (default 0.3)")
    p.add_argument("--resolution", type=int, help="RICI / spin image size N (default 64)")
    p.add_argument("--samples-per-triangle", type=int, help="point samples per triangle for SI/3DSC (default 10)")
    p.add_argument("--support-angle", type=float, help="spin image support angle in degrees (default: off)")
    p.add_argument("--azimuth-bins", type=int, help="3DSC azimuth divisions J (default 15)")
    p.add_argument("--elevation-bins", type=int, help="3DSC elevation divisions K (default 11)")
    p.add_argument("--radial-bins", type=int, help="3DSC radial shells L (default 12)")
    p.add_argument("--r-min", type=float, help="3DSC inner radius (default 0.048)")


def _add_clutterbox_options(p):
    p.add_argument("--dataset", help=f"directory of OBJ/PLY meshes (default ${DATASET_ENV})")
    p.add_argument("--seed", type=int, help="experiment seed (default 0)")
    p.add_argument("--counts", help="object counts, comma separated (default 1,5,10)")
    p.add_argument("--box-side", type=float, help="clutterbox side length (default 3)")
    p.add_argument("--clutter-samples", type=int, help="surface samples per level for clutter fractions")
    p.add_argument("--identity-reference", action="store_true", default=argparse.SUPPRESS,
                   help="place the reference object untransformed (debugging)")
    p.add_argument("--out", help="output directory (default .)")
    _add_descriptor_options(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rici", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="cap on worker threads")
    parser.add_argument("--config", help="JSON or YAML file of option defaults")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("describe", help="compute one descriptor at a mesh vertex", argument_default=argparse.SUPPRESS)
    p.add_argument("mesh", help="OBJ or PLY file")
    p.add_argument("--method", choices=("rici", "si", "3dsc"))
    p.add_argument("--vertex", type=int, required=True, help="index into the mesh's unique vertices")
    p.add_argument("--seed", type=int, help="sampling seed for SI/3DSC (default 0)")
    p.add_argument("--normalize", action="store_true", help="scale the mesh into the unit sphere first")
    p.add_argument("--out", required=True, help="descriptor CSV path; a .pgm is written next to it for images")
    _add_descriptor_options(p)

    p = sub.add_parser("compare", help="distance between two descriptor files", argument_default=argparse.SUPPRESS)
    p.add_argument("needle")
    p.add_argument("haystack")
    p.add_argument("--threshold", type=float, help="print only the '<=' / '>' verdict against this value")

    p = sub.add_parser("clutterbox", help="run the clutterbox experiment", argument_default=argparse.SUPPRESS)
    p.add_argument("--method", choices=("rici", "si", "3dsc"))
    _add_clutterbox_options(p)

    p = sub.add_parser("ablation-support-angle", help="spin image clutterbox runs over several support angles",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--angles", help="support angles in degrees, comma separated (default 60,180)")
    _add_clutterbox_options(p)

    p = sub.add_parser("bench", help="micro-benchmarks", argument_default=argparse.SUPPRESS)
    p.add_argument("kind", choices=("projection", "generation", "matching"))
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int, help="projection: number of points (default 1e8)")
    p.add_argument("--anchors", type=int, help="generation: descriptors per scene (default 256)")
    p.add_argument("--triangle-levels", help="generation: object counts of the scenes (default 1,2,5,10)")
    p.add_argument("--objects", type=int, help="matching: objects in the scene (default 5)")
    p.add_argument("--repeats", type=int, help="generation and matching: best of this many runs (default 3)")
    p.add_argument("--out", dest="bench_out", help="CSV path (default stdout)")

    p = sub.add_parser("synth-corpus", help="write a procedural mesh corpus", argument_default=argparse.SUPPRESS)
    p.add_argument("out", help="directory to create")
    p.add_argument("--count", type=int, help="number of meshes (default 60)")
    p.add_argument("--seed", type=int, dest="corpus_seed", help="corpus seed (default 2020)")
    return parser


def _load_config_file(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).lower().endswith((".yaml", ".yml")):
        import yaml
        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise UsageError("config file must hold a mapping of option names to values")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags, in increasing priority."""
    opts = dict(DEFAULTS)
    opts["dataset"] = os.environ.get(DATASET_ENV)
    if args.config:
        opts.update(_load_config_file(args.config))
    opts.update({k: v for k, v in vars(args).items() if k != "config"})
    return opts


def _shape_context_params(o: dict) -> ShapeContextParams:
    return ShapeContextParams(int(o["azimuth_bins"]), int(o["elevation_bins"]), int(o["radial_bins"]),
                              float(o["r_min"]), float(o["support_radius"]))


def _clutterbox_config(o: dict, method: str) -> ClutterboxConfig:
    if not o.get("dataset"):
        raise UsageError(f"no dataset: pass --dataset or set {DATASET_ENV}")
    try:
        return ClutterboxConfig(
            seed=int(o["seed"]), box_side=float(o["box_side"]), object_counts=_int_list(o["counts"]),
            method=method, support_radius=float(o["support_radius"]), resolution=int(o["resolution"]),
            samples_per_triangle=int(o["samples_per_triangle"]),
            support_angle=None if o["support_angle"] is None else float(o["support_angle"]),
            dataset_path=str(o["dataset"]), shape_context=_shape_context_params(o),
            clutter_samples=int(o["clutter_samples"]), identity_reference=bool(o["identity_reference"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_describe(o: dict) -> list[Path]:
    mesh = load_mesh(o["mesh"])
    if o["normalize"]:
        mesh = normalize_to_unit_sphere(mesh)[0]
    anchors, _ = unique_vertex_array(mesh)
    idx = int(o["vertex"])
    if not 0 <= idx < len(anchors):
        raise ValueError(f"vertex index {idx} out of range; the mesh has {len(anchors)} unique vertices")
    anchor = OrientedPoint(anchors[idx, :3], anchors[idx, 3:])
    method = o["method"]
    radius, res = float(o["support_radius"]), int(o["resolution"])
    meta = {"support_radius": radius}
    if method == "rici":
        bins = generate_rici(mesh, anchor, radius, res).bins
        meta["resolution"] = res
    else:
        cloud = sample_point_cloud([(mesh, 0)], int(o["samples_per_triangle"]) * mesh.triangle_count,
                                   Prng(int(o["seed"]), ("describe",)))
        if method == "si":
            bins = generate_spin_image(cloud, anchor, radius, res, o["support_angle"]).bins
            meta["resolution"] = res
            if o["support_angle"] is not None:
                meta["support_angle"] = float(o["support_angle"])
        else:
            params = _shape_context_params(o)
            bins = generate_shape_context(cloud, anchor, params).bins
            meta.update(azimuth_bins=params.azimuth_bins, elevation_bins=params.elevation_bins,
                        radial_bins=params.radial_bins, r_min=params.r_min)
    out = Path(o["out"])
    paths = [write_descriptor_csv(out, method, bins, meta)]
    if method != "3dsc":
        paths.append(write_pgm(out.with_suffix(".pgm"), bins, normalise=method == "si"))
    return paths


def cmd_compare(o: dict) -> str:
    a = read_descriptor_csv(o["needle"])
    b = read_descriptor_csv(o["haystack"])
    if not a.compatible_with(b):
        raise ValueError("descriptor files are not parameter-compatible "
                         f"({a.method} {a.meta} vs {b.method} {b.meta})")
    threshold = o.get("threshold")
    if a.method == "rici":
        if threshold is not None:
            t = int(np.floor(threshold))
            return "<=" if crd_distance(a.bins, b.bins, early_exit_threshold=t) <= t else ">"
        return str(crd_distance(a.bins, b.bins))
    d = pearson_distance(a.bins, b.bins) if a.method == "si" else shape_context_distance(a.bins, b.bins)
    if threshold is not None:
        return "<=" if d <= threshold else ">"
    return repr(d)


def _summary(result) -> str:
    return "\n".join(f"n={h.clutter_object_count} queries={h.total_queries} haystack={h.haystack_size} "
                     f"rank0={h.fraction_at(0):.4f}" for h in result.histograms)


def cmd_clutterbox(o: dict) -> list[Path]:
    config = _clutterbox_config(o, o["method"])
    result = run_clutterbox(config)
    print(_summary(result))
    return write_outputs(result, o["out"], stem=f"clutterbox_{config.method}")


def cmd_ablation(o: dict) -> list[Path]:
    config = _clutterbox_config(o, "si")
    angles = _float_list(o["angles"])
    results = support_angle_ablation(config, angles)
    paths, summary = [], {}
    for angle, result in results.items():
        print(f"support angle {angle:g}:\n{_summary(result)}")
        paths += write_outputs(result, o["out"], stem=f"ablation_si_angle{angle:g}")
        summary[f"{angle:g}"] = {str(h.clutter_object_count): h.fraction_at(0) for h in result.histograms}
    p = Path(o["out"]) / "ablation_summary.json"
    p.write_text(dumps_json({"version": __version__, "seed": config.seed, "rank0Fraction": summary}),
                 encoding="utf-8")
    return paths + [p]


def cmd_bench(o: dict) -> list[Path]:
    from . import bench
    from .projection import bench_projection

    kind, seed = o["kind"], int(o["seed"])
    if kind == "projection":
        r = bench_projection(int(o.get("count", 10**8)), Prng(seed, ("bench", "projection")))
        header = "count,elapsed_two_rotation,elapsed_oracle,speedup,max_abs_diff\n"
        text = header + f"{r.count},{r.elapsed_two_rotation!r},{r.elapsed_oracle!r},{r.speedup!r},{r.max_abs_diff!r}\n"
    else:
        if kind == "generation":
            rows = bench.bench_generation(seed, _int_list(o["triangle_levels"]), int(o["anchors"]),
                                          int(o["samples_per_triangle"]), float(o["support_radius"]),
                                          int(o["resolution"]), repeats=int(o["repeats"]))
        else:
            rows = bench.bench_matching(seed, int(o["objects"]), repeats=int(o["repeats"]))
        text = bench.rows_csv(rows)
    if o.get("bench_out"):
        p = Path(o["bench_out"])
        p.write_text(text, encoding="utf-8")
        return [p]
    sys.stdout.write(text)
    return []


def cmd_synth_corpus(o: dict) -> list[Path]:
    from .corpus import write_corpus

    return write_corpus(o["out"], int(o.get("count", 60)), int(o.get("corpus_seed", 2020)))


COMMANDS = {
    "describe": cmd_describe,
    "compare": cmd_compare,
    "clutterbox": cmd_clutterbox,
    "ablation-support-angle": cmd_ablation,
    "bench": cmd_bench,
    "synth-corpus": cmd_synth_corpus,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        o = resolve_options(args)
        if o.get("threads"):
            import numba
            numba.set_num_threads(min(int(o["threads"]), numba.config.NUMBA_NUM_THREADS))
        result = COMMANDS[args.command](o)
    except UsageError as exc:
        print(f"rici: error: {exc}", file=sys.stderr)
        return 1
    except (DatasetTooSmall, ValueError, OSError, KeyError) as exc:
        print(f"rici: data error: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, str):
        print(result)
    else:
        for p in result:
            log.info("wrote %s", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
