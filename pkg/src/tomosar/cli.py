"""Command-line front end: simulate / filter / invert / evaluate / crlb.

Configuration is one JSON document with optional sections (scene, geometry,
noise, nonlocal, solver, pipeline, eval); unknown keys are rejected. A run
manifest embedding the fully resolved configuration is written next to each
output, and can be passed back via --config to reproduce a run bit for bit.

Exit codes: 0 success, 2 usage or configuration error, 3 data or format
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .crlb import AccuracyQuery, crlb_double, crlb_single, interference_factor
from .evaluate import height_stats, region_masks, separation_histogram
from .io import (
    FormatError,
    read_manifest,
    read_raster,
    read_scatterer_csv,
    read_stack,
    write_kmap,
    write_manifest,
    write_pgm_preview,
    write_raster,
    write_scatterer_csv,
    write_stack,
)
from .model import AcquisitionGeometry, height_from_elevation
from .nlfilter import NlParams, filter_stack
from .pipeline import PipelineOptions, invert_image
from .simulate import (
    Rectangle,
    SceneSpec,
    baseline_distribution,
    generate_scene,
    simulate_stack,
)
from .solver import NumericalError, SolverOptions

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    """Invalid run configuration (unknown keys, bad values, bad JSON)."""


_GEOMETRY_DEFAULTS = {
    "wavelength_m": 0.031,
    "range_m": 704000.0,
    "incidence_deg": 39.36,
    "n_images": 29,
    "sigma_b_m": 100.0,
    "baseline_seed": 7,
    "baselines_m": None,
}
_NOISE_DEFAULTS = {"snr_db": None, "seed": 1234}
_NONLOCAL_DEFAULTS = {"patch_radius": 3, "search_radius": 10, "h": 12.0}
_SOLVER_DEFAULTS = {
    "block_count": 1,
    "max_iterations": 150,
    "tolerance": 1e-9,
    "seed": 0,
    "shrink": 0.5,
    "step_scale": 1.0,
    "acceleration": True,
    "check_every": 25,
    "lambda_factor": 0.05,
}
_PIPELINE_DEFAULTS = {
    "k_max": 2,
    "support_threshold": 0.1,
    "oversampling": 4,
    "extent_low": -2.0,
    "extent_high": 4.0,
    "seed": 0,
}
_EVAL_DEFAULTS = {"erosion": 2, "bin_width": 0.1}


def _merge_section(name: str, defaults: dict, given: dict) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def _default_scene_dict() -> dict:
    from .simulate import default_scene

    spec = default_scene()
    return {
        "width": spec.width,
        "height": spec.height,
        "rectangles": [
            {
                "origin_row": r.origin_row,
                "origin_col": r.origin_col,
                "rows": r.rows,
                "cols": r.cols,
                "height_m": r.height_m,
                "name": r.name,
            }
            for r in spec.rectangles
        ],
    }


def _parse_scene(section: dict) -> SceneSpec:
    keys = {"width", "height", "rectangles"}
    unknown = set(section) - keys
    if unknown:
        raise ConfigError(f"unknown keys in section 'scene': {sorted(unknown)}")
    rect_keys = {"origin_row", "origin_col", "rows", "cols", "height_m", "name"}
    rectangles = []
    for entry in section.get("rectangles", []):
        bad = set(entry) - rect_keys
        if bad:
            raise ConfigError(f"unknown keys in scene rectangle: {sorted(bad)}")
        rectangles.append(
            Rectangle(
                origin_row=int(entry["origin_row"]),
                origin_col=int(entry["origin_col"]),
                rows=int(entry["rows"]),
                cols=int(entry["cols"]),
                height_m=float(entry["height_m"]),
                name=entry.get("name"),
            )
        )
    try:
        return SceneSpec(
            width=int(section["width"]), height=int(section["height"]), rectangles=tuple(rectangles)
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid scene: {exc}") from exc


class RunConfig:
    """Fully resolved configuration with every default applied."""

    def __init__(self, document: dict):
        known = {"scene", "geometry", "noise", "nonlocal", "solver", "pipeline", "eval"}
        unknown = set(document) - known
        if unknown:
            raise ConfigError(f"unknown top-level config sections: {sorted(unknown)}")
        self.scene_dict = document.get("scene", _default_scene_dict())
        self.scene = _parse_scene(self.scene_dict)
        self.geometry = _merge_section("geometry", _GEOMETRY_DEFAULTS, document.get("geometry", {}))
        self.noise = _merge_section("noise", _NOISE_DEFAULTS, document.get("noise", {}))
        self.nonlocal_ = _merge_section("nonlocal", _NONLOCAL_DEFAULTS, document.get("nonlocal", {}))
        self.solver = _merge_section("solver", _SOLVER_DEFAULTS, document.get("solver", {}))
        self.pipeline = _merge_section("pipeline", _PIPELINE_DEFAULTS, document.get("pipeline", {}))
        self.eval = _merge_section("eval", _EVAL_DEFAULTS, document.get("eval", {}))
        try:
            self.nl_params = NlParams(
                patch_radius=int(self.nonlocal_["patch_radius"]),
                search_radius=int(self.nonlocal_["search_radius"]),
                h=float(self.nonlocal_["h"]),
            )
            solver = dict(self.solver)
            self.lambda_factor = float(solver.pop("lambda_factor"))
            self.solver_options = SolverOptions(**solver)
            pipeline = dict(self.pipeline)
            self.pipeline_seed = int(pipeline.pop("seed"))
            self.pipeline_options = PipelineOptions(
                lambda_factor=self.lambda_factor, solver=self.solver_options, **pipeline
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration value: {exc}") from exc

    def build_geometry(self) -> AcquisitionGeometry:
        geo = self.geometry
        if geo["baselines_m"] is not None:
            baselines = np.asarray(geo["baselines_m"], dtype=float)
        else:
            baselines = baseline_distribution(
                int(geo["n_images"]), int(geo["baseline_seed"]), float(geo["sigma_b_m"])
            )
        try:
            return AcquisitionGeometry(
                wavelength=float(geo["wavelength_m"]),
                slant_range=float(geo["range_m"]),
                incidence_angle=float(np.deg2rad(geo["incidence_deg"])),
                baselines=baselines,
            )
        except ValueError as exc:
            raise ConfigError(f"invalid geometry: {exc}") from exc

    def as_dict(self) -> dict:
        return {
            "scene": self.scene_dict,
            "geometry": self.geometry,
            "noise": self.noise,
            "nonlocal": self.nonlocal_,
            "solver": self.solver,
            "pipeline": {**self.pipeline, "seed": self.pipeline_seed},
            "eval": self.eval,
        }


def load_config(path: str | None) -> RunConfig:
    """Load a config JSON; a run manifest (with a 'config' key) also works."""
    if path is None:
        return RunConfig({})
    try:
        with open(path) as fh:
            document = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "config" in document and "tool" in document:
        document = document["config"]
    return RunConfig(document)


def _manifest(command: str, config: RunConfig, inputs: dict, outputs: dict) -> dict:
    return {
        "tool": "tomosar",
        "version": __version__,
        "command": command,
        "config": config.as_dict(),
        "inputs": inputs,
        "outputs": outputs,
        "numpy_version": np.__version__,
    }


def _thread_count(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("TOMOSAR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"invalid TOMOSAR_THREADS value: {env!r}") from exc
    return os.cpu_count() or 1


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    geom = config.build_geometry()
    heights = generate_scene(config.scene)
    snr_db = config.noise["snr_db"]
    stack = simulate_stack(
        heights, geom, None if snr_db is None else float(snr_db), int(config.noise["seed"])
    )
    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else out.with_name(out.stem + "_truth.hgt")
    manifest_path = Path(args.manifest) if args.manifest else out.with_name(out.stem + "_manifest.json")
    write_stack(out, stack)
    write_raster(truth_path, heights)
    if args.preview:
        write_pgm_preview(out.with_suffix(".pgm"), heights)
    write_manifest(
        manifest_path,
        _manifest(
            "simulate",
            config,
            inputs={},
            outputs={"stack": str(out), "truth": str(truth_path)},
        ),
    )
    print(f"wrote {out} ({stack.shape[0]}x{stack.shape[1]}x{stack.shape[2]}) and {truth_path}")
    return EXIT_OK


def cmd_filter(args) -> int:
    config = load_config(args.config)
    params = config.nl_params
    if args.patch_radius is not None or args.search_radius is not None or args.h is not None:
        params = NlParams(
            patch_radius=args.patch_radius if args.patch_radius is not None else params.patch_radius,
            search_radius=args.search_radius if args.search_radius is not None else params.search_radius,
            h=args.h if args.h is not None else params.h,
        )
    stack = read_stack(args.input)
    filtered, field = filter_stack(
        stack, params, tile_size=args.tiles, workers=_thread_count(args.threads)
    )
    write_stack(args.out, filtered)
    enl_path = Path(args.enl) if args.enl else Path(args.out).with_name(Path(args.out).stem + "_enl.hgt")
    write_raster(enl_path, field.enl)
    if args.preview:
        write_pgm_preview(Path(args.out).with_suffix(".pgm"), field.enl)
    manifest_path = (
        Path(args.manifest) if args.manifest else Path(args.out).with_name(Path(args.out).stem + "_manifest.json")
    )
    write_manifest(
        manifest_path,
        _manifest(
            "filter",
            config,
            inputs={"stack": str(args.input)},
            outputs={"stack": str(args.out), "enl": str(enl_path)},
        ),
    )
    print(f"wrote {args.out} and {enl_path}")
    return EXIT_OK


def cmd_invert(args) -> int:
    config = load_config(args.config)
    stack = read_stack(args.input)
    result = invert_image(
        stack,
        options=config.pipeline_options,
        seed=config.pipeline_seed,
        workers=_thread_count(args.threads),
    )
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    top = prefix.with_name(prefix.name + "_top.hgt")
    ground = prefix.with_name(prefix.name + "_ground.hgt")
    dominant = prefix.with_name(prefix.name + "_height.hgt")
    kmap = prefix.with_name(prefix.name + "_k.kmap")
    table = prefix.with_name(prefix.name + "_scatterers.csv")
    manifest_path = prefix.with_name(prefix.name + "_manifest.json")
    write_raster(top, result.top_height)
    write_raster(ground, result.ground_height)
    write_raster(dominant, result.dominant_height)
    write_kmap(kmap, result.khat)
    heights = height_from_elevation(stack.geometry, result.scatterers["elevation"])
    write_scatterer_csv(table, result.scatterers, heights)
    if args.preview:
        write_pgm_preview(prefix.with_name(prefix.name + "_height.pgm"), result.dominant_height)
    write_manifest(
        manifest_path,
        _manifest(
            "invert",
            config,
            inputs={"stack": str(args.input)},
            outputs={
                "height": str(dominant),
                "top": str(top),
                "ground": str(ground),
                "kmap": str(kmap),
                "scatterers": str(table),
                "rho_s_m": result.rho_s,
                "grid_spacing_m": result.grid.spacing,
            },
        ),
    )
    print(f"wrote {dominant}, {top}, {ground}, {kmap}, {table}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    heights = read_raster(args.height)
    truth = read_raster(args.truth)
    if heights.shape != truth.shape:
        raise FormatError(
            f"height map {heights.shape} and truth map {truth.shape} have different shapes"
        )
    scene = config.scene
    if args.scene:
        with open(args.scene) as fh:
            try:
                scene = _parse_scene(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON in {args.scene}: {exc}") from exc
    if scene.shape != heights.shape:
        raise FormatError(f"scene {scene.shape} does not match rasters {heights.shape}")
    heights = np.where(np.isfinite(heights), heights, np.nan)
    erosion = int(args.erosion if args.erosion is not None else config.eval["erosion"])
    masks = region_masks(scene, erosion=erosion)
    stats = height_stats(heights, truth, masks)
    with open(args.out, "w") as fh:
        fh.write("region,truth_m,mean_m,std_m,mean_error_m,count\n")
        for s in stats:
            fh.write(f"{s.region},{s.truth!r},{s.mean!r},{s.std!r},{s.mean_error!r},{s.count}\n")
    print(f"wrote {args.out}")
    if args.scatterers:
        if args.rho_s is None:
            raise ConfigError("--rho-s is required with --scatterers")
        records = read_scatterer_csv(args.scatterers)
        khat = np.zeros(heights.shape, dtype=np.uint8)
        top = np.full(heights.shape, np.nan)
        ground = np.full(heights.shape, np.nan)
        for rec in records:
            r, c = rec["row"], rec["col"]
            khat[r, c] += 1
            elev = rec["elevation_m"]
            if np.isnan(top[r, c]) or elev > top[r, c]:
                top[r, c] = elev
            if np.isnan(ground[r, c]) or elev < ground[r, c]:
                ground[r, c] = elev
        hist = separation_histogram(
            top, ground, khat, float(args.rho_s), float(config.eval["bin_width"])
        )
        hist_path = args.hist_out or str(Path(args.out).with_name(Path(args.out).stem + "_hist.csv"))
        with open(hist_path, "w") as fh:
            fh.write("kappa_low,kappa_high,count\n")
            for i, count in enumerate(hist.counts):
                fh.write(f"{hist.edges[i]!r},{hist.edges[i + 1]!r},{int(count)}\n")
            fh.write(f"# total,{hist.total}\n")
            fh.write(f"# sr_fraction,{hist.sr_fraction!r}\n")
            fh.write(f"# non_sr_fraction,{hist.non_sr_fraction!r}\n")
        print(f"wrote {hist_path}")
    return EXIT_OK


def cmd_crlb(args) -> int:
    query = AccuracyQuery(
        wavelength=args.wavelength,
        slant_range=args.range,
        sigma_b=args.sigma_b,
        n=args.n,
        snr=10.0 ** (args.snr_db / 10.0),
        kappa=args.kappa,
        delta_phi=args.delta_phi,
    )
    single = crlb_single(query)
    c0 = interference_factor(query.kappa, query.delta_phi)
    double = crlb_double(query)
    print("sigma_single_m,c0,sigma_double_m")
    print(f"{single!r},{c0!r},{double!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tomosar",
        description="Multi-baseline SAR tomography: simulation, non-local filtering, inversion, evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"tomosar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic noisy stack from a scene")
    p.add_argument("--config", help="run configuration JSON (or a previous manifest)")
    p.add_argument("--out", required=True, help="output stack file (.tstk)")
    p.add_argument("--truth", help="output ground-truth height raster (default: <out>_truth.hgt)")
    p.add_argument("--manifest", help="output manifest path (default: <out>_manifest.json)")
    p.add_argument("--preview", action="store_true", help="also write an 8-bit PGM preview")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter", help="non-local filter a stack")
    p.add_argument("--in", dest="input", required=True, help="input stack file")
    p.add_argument("--out", required=True, help="output filtered stack file")
    p.add_argument("--enl", help="output ENL raster (default: <out>_enl.hgt)")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--patch-radius", type=int, help="override patch radius")
    p.add_argument("--search-radius", type=int, help="override search radius")
    p.add_argument("--h", type=float, help="override filtering parameter h")
    p.add_argument("--tiles", type=int, help="tile size (default: whole image)")
    p.add_argument("--threads", type=int, help="worker threads (default: TOMOSAR_THREADS or cores)")
    p.add_argument("--manifest", help="output manifest path")
    p.add_argument("--preview", action="store_true", help="also write an ENL PGM preview")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("invert", help="per-pixel elevation inversion of a stack")
    p.add_argument("--in", dest="input", required=True, help="input stack file")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--out-prefix", required=True, help="prefix for output rasters/CSV")
    p.add_argument("--threads", type=int, help="worker processes (default: TOMOSAR_THREADS or cores)")
    p.add_argument("--preview", action="store_true", help="also write a height PGM preview")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("evaluate", help="statistics of a height map against ground truth")
    p.add_argument("--height", required=True, help="estimated height raster")
    p.add_argument("--truth", required=True, help="ground-truth height raster")
    p.add_argument("--scene", help="scene spec JSON (defaults to config scene)")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--out", required=True, help="output statistics CSV")
    p.add_argument("--erosion", type=int, help="mask erosion in pixels (default from config)")
    p.add_argument("--scatterers", help="scatterer CSV for the separation histogram")
    p.add_argument("--rho-s", type=float, help="rayleigh resolution for the histogram [m]")
    p.add_argument("--hist-out", help="output histogram CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crlb", help="closed-form accuracy bounds")
    p.add_argument("--wavelength", type=float, required=True, help="wavelength [m]")
    p.add_argument("--range", type=float, required=True, help="slant range [m]")
    p.add_argument("--sigma-b", type=float, required=True, help="baseline standard deviation [m]")
    p.add_argument("--n", type=int, required=True, help="number of acquisitions")
    p.add_argument("--snr-db", type=float, required=True, help="SNR in dB")
    p.add_argument("--kappa", type=float, default=3.0, help="normalized scatterer distance")
    p.add_argument("--delta-phi", type=float, default=0.0, help="scatterer phase difference [rad]")
    p.set_defaults(func=cmd_crlb)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
