"""Batch front end: height maps, stabilization, synthetic scenes and the simulation table.

Usage:
    python -m adapters.cli heights --config configs/synthetic_low.yaml
    python -m adapters.cli table1 --reps 100 --seed 1

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from clients.raster_io import heat_map, load_raster, save_pgm, save_raster_csv
from height_engine.errors import ConfigError, NumericalError, RasterIOError
from height_engine.estimator import HeightMap, SearchGrid, sliding_height_map
from height_engine.geometry import HeightWind
from height_engine.likelihood import StabilizationMap, column_profiles, stabilize
from height_engine.raster import Raster
from height_engine.store import InMemoryGeometryStore, NullGeometryStore
from height_engine.synthetic import SceneSimulator
from matchers import MODES, build_matcher
from run_config import MANIFEST_RUN_KEY, RunConfig, env_workers, load_run_config, run_config_from_dict
from simstudy.table1 import METHODS, format_table1, run_table1, write_table1_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

# Height margin around the truth in configs written by ``simulate``.
SIMULATE_GRID_MARGIN_M = 2000.0


def _configure_logging() -> None:
    level = getattr(logging, os.getenv("LOG_LEVEL", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


# ---------------------------------------------------------------------------
# Shared steps
# ---------------------------------------------------------------------------

def _load_config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config or os.environ.get("CLOUDHEIGHT_CONFIG", ""))
    raw = config.to_dict()
    if getattr(args, "mode", None):
        raw["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "out", None):
        raw["out_dir"] = args.out
    if getattr(args, "reps", None) is not None:
        raw["table1"]["reps"] = args.reps
    if getattr(args, "methods", None):
        raw["table1"]["methods"] = args.methods.split(",")
    return run_config_from_dict(raw)


def _load_scene(config: RunConfig) -> list[Raster]:
    scene = []
    for name in config.use_cameras:
        path = config.inputs.get(name)
        if not path:
            raise RasterIOError(f"no input raster configured for camera {name!r}")
        try:
            raster = load_raster(path, config.pitch_m)
        except RasterIOError as e:
            raise RasterIOError(f"camera {name!r}: {e}") from e
        if raster.pitch != config.pitch_m:
            logger.warning(
                "Camera %s: raster pitch %g m differs from pitch_m %g m; using pitch_m",
                name, raster.pitch, config.pitch_m,
            )
        scene.append(replace(raster, pitch=config.pitch_m))
    shapes = {(r.rows, r.cols) for r in scene}
    if len(shapes) != 1:
        raise RasterIOError(f"camera rasters differ in size: {sorted(shapes)}")
    return scene


def _stabilization_map(config: RunConfig, scene: list[Raster]) -> StabilizationMap:
    stab = config.stabilization
    if stab.gains is not None or stab.offsets is not None:
        gains = stab.gains or (1.0,) * len(scene)
        offsets = stab.offsets or (0.0,) * len(scene)
        if len(gains) != len(scene) or len(offsets) != len(scene):
            raise ConfigError(f"manual stabilization needs {len(scene)} gains and offsets")
        return StabilizationMap(tuple(gains), tuple(offsets))
    region = stab.region or (0, scene[0].cols)
    try:
        return stabilize(scene, region, stab.reference)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _write_grid_csv(path: Path, values: np.ndarray, valid: np.ndarray | None = None, fmt=None) -> None:
    """One CSV line per map row; cells outside ``valid`` are left empty."""
    fmt = fmt or (lambda v: repr(float(v)))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for i, row in enumerate(values):
            writer.writerow(
                "" if valid is not None and not valid[i, j] else fmt(v)
                for j, v in enumerate(row)
            )


def _write_profiles(path: Path, height_map: HeightMap) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["window_row", "window_col", "h", "v1", "v2", "loglik"])
        for (r, c), profile in sorted(height_map.profiles.items()):
            for hw, loglik in zip(profile.candidates, profile.logliks):
                value = "" if np.isnan(loglik) else repr(float(loglik))
                writer.writerow([r, c, repr(hw.h), repr(hw.v1), repr(hw.v2), value])


def _write_manifest(path: Path, config: RunConfig, run: dict) -> None:
    manifest = config.to_dict()
    manifest[MANIFEST_RUN_KEY] = run
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_heights(config: RunConfig) -> None:
    scene = _load_scene(config)
    store = InMemoryGeometryStore(config.cache_size) if config.cache_size else NullGeometryStore()
    matcher = build_matcher(
        config.mode, config.matern, config.nugget, store, config.profile_high, config.sigma_divisor
    )
    run: dict = {"command": "heights"}
    if matcher.needs_stabilization:
        stab = _stabilization_map(config, scene)
        scene = stab.apply(scene)
        run["stabilization"] = {"gains": list(stab.gains), "offsets": list(stab.offsets)}

    height_map = sliding_height_map(
        scene,
        config.grid,
        matcher,
        config.active_cameras,
        window_size=config.window,
        stride=config.stride,
        pitch=config.pitch_m,
        tau_flat=config.tau_flat,
        workers=env_workers(),
        keep_profiles=frozenset(config.profiles),
    )

    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    _write_grid_csv(out / "heights.csv", height_map.heights, height_map.valid)
    _write_grid_csv(out / "flags.csv", height_map.valid, fmt=lambda v: str(int(v)))
    _write_grid_csv(out / "flatness.csv", height_map.flatness)
    save_pgm(heat_map(height_map.heights, height_map.valid), out / "heights.pgm")
    if height_map.profiles:
        _write_profiles(out / "profiles.csv", height_map)
    run.update(coverage=height_map.coverage, cells=list(height_map.shape))
    _write_manifest(out / "manifest.json", config, run)
    print(f"{height_map.shape[0]}x{height_map.shape[1]} windows, coverage {height_map.coverage:.3f} -> {out}")


def cmd_stabilize(config: RunConfig) -> None:
    scene = _load_scene(config)
    stab = _stabilization_map(config, scene)
    means, variances = column_profiles(stab.apply(scene))

    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    result = {
        "cameras": list(config.use_cameras),
        "gains": list(stab.gains),
        "offsets": list(stab.offsets),
        "region": list(config.stabilization.region or (0, scene[0].cols)),
    }
    (out / "stabilization.json").write_text(json.dumps(result, indent=2) + "\n")
    with open(out / "column_profiles.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["camera", "column", "mean", "variance"])
        for name, mean_row, var_row in zip(config.use_cameras, means, variances):
            for col, (m, v) in enumerate(zip(mean_row, var_row)):
                writer.writerow([name, col, repr(float(m)), repr(float(v))])
    _write_manifest(out / "manifest.json", config, {"command": "stabilize", **result})
    for name, g, b in zip(config.use_cameras, stab.gains, stab.offsets):
        print(f"{name}: {g:.4f} * y + {b:.4f}")


def cmd_simulate(config: RunConfig) -> None:
    sim = config.simulation
    hw = HeightWind(sim.height_m, sim.v1, sim.v2)
    simulator = SceneSimulator(
        config.active_cameras, sim.shape, hw, config.matern, config.pitch_m, config.nugget
    )
    scene = simulator.draw(config.seed)

    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    inputs = {}
    for name, raster in zip(config.use_cameras, scene):
        path = out / f"{name}.csv"
        save_raster_csv(raster, path)
        inputs[name] = str(path)

    grid = SearchGrid(
        h_min=max(0.0, sim.height_m - SIMULATE_GRID_MARGIN_M),
        h_max=sim.height_m + SIMULATE_GRID_MARGIN_M,
        h_step=config.grid.h_step,
        v1=(sim.v1,),
        v2=(sim.v2,),
    )
    raw = config.to_dict()
    raw.update(inputs=inputs, out_dir=str(out / "heights"))
    raw["grid"] = {
        "h_min": grid.h_min, "h_max": grid.h_max, "h_step": grid.h_step,
        "v1": list(grid.v1), "v2": list(grid.v2),
    }
    run_config_from_dict(raw)
    (out / "config.yaml").write_text(yaml.safe_dump(raw, sort_keys=True))
    print(f"Wrote {len(scene)} rasters and {out / 'config.yaml'}")


def cmd_table1(config: RunConfig) -> None:
    t1 = config.table1
    results = run_table1(
        t1.sim_config(),
        methods=tuple(t1.methods),
        reps=t1.reps,
        master_seed=config.seed,
        params=config.matern,
        nugget=config.nugget,
        workers=env_workers(),
    )
    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    write_table1_csv(results, out / "table1.csv", config.seed)
    _write_manifest(out / "manifest.json", config, {"command": "table1"})
    print(format_table1(results))


COMMANDS = {
    "heights": cmd_heights,
    "stabilize": cmd_stabilize,
    "simulate": cmd_simulate,
    "table1": cmd_table1,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Cloud-height retrieval by interlaced super-resolution likelihoods")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("heights", "sliding-window height map from camera rasters"),
        ("stabilize", "brightness stabilization maps and column profiles"),
        ("simulate", "synthetic multi-camera scene from the Matérn model"),
        ("table1", "strip simulation study over the estimation methods"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="run config (YAML or JSON); default $CLOUDHEIGHT_CONFIG")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        if name == "heights":
            p.add_argument("--mode", choices=MODES)
        if name == "table1":
            p.add_argument("--reps", type=int)
            p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        COMMANDS[args.command](config)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RasterIOError, OSError) as e:
        logger.error("I/O error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as e:
        logger.error("Numerical failure: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
