"""Run config loader.

A run is declared in a YAML file (JSON works too); see CONFIGURATION.md for
the schema. Every field has a default, so an empty file is a valid config.
Non-file settings come from env vars (CLOUDHEIGHT_CONFIG, CLOUDHEIGHT_WORKERS,
LOG_LEVEL), optionally from a .env file.

Usage:
    config = load_run_config(os.environ.get("CLOUDHEIGHT_CONFIG", ""))
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import yaml
from dotenv import load_dotenv

from height_engine.errors import ConfigError
from height_engine.estimator import DEFAULT_WINDOW, SearchGrid
from height_engine.gauss import DEFAULT_NUGGET, MaternParams
from height_engine.geometry import DEFAULT_PITCH_M, MISR_CAMERA_ANGLES, CameraSpec, HeightWind
from height_engine.likelihood import SIGMA_DIVISORS
from height_engine.store import DEFAULT_CACHE_SIZE
from matchers import MODES
from simstudy.strip import SimConfig
from simstudy.table1 import METHODS

load_dotenv()

DEFAULT_USE_CAMERAS = ("Bf", "Cf", "Df")
# Run metadata (coverage, timings) stored next to the config echo in manifests.
MANIFEST_RUN_KEY = "run"
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass
class StabilizationConfig:
    region: tuple[int, int] | None = None
    reference: int = 0
    gains: tuple[float, ...] | None = None
    offsets: tuple[float, ...] | None = None


@dataclass
class SimulationConfig:
    height_m: float = 5000.0
    v1: float = 0.0
    v2: float = 0.0
    shape: tuple[int, int] = (64, 20)


@dataclass
class Table1Config:
    reps: int = 100
    methods: tuple[str, ...] = METHODS
    d_min: float = 0.404
    d_max: float = 0.604
    d_step: float = 0.0002
    phase: int = 1

    def sim_config(self) -> SimConfig:
        return SimConfig(d_min=self.d_min, d_max=self.d_max, d_step=self.d_step, phase=self.phase)


@dataclass
class RunConfig:
    cameras: list[CameraSpec] = field(
        default_factory=lambda: [CameraSpec(n, t) for n, t in MISR_CAMERA_ANGLES]
    )
    use_cameras: tuple[str, ...] = DEFAULT_USE_CAMERAS
    pitch_m: float = DEFAULT_PITCH_M
    matern: MaternParams = field(default_factory=MaternParams)
    nugget: float = DEFAULT_NUGGET
    window: tuple[int, int] = DEFAULT_WINDOW
    stride: int = 1
    grid: SearchGrid = field(default_factory=SearchGrid)
    mode: str = "low"
    # None keeps each matcher's own threshold
    tau_flat: float | None = None
    sigma_divisor: str = "m"
    profile_high: bool = False
    stabilization: StabilizationConfig = field(default_factory=StabilizationConfig)
    inputs: dict[str, str] = field(default_factory=dict)
    out_dir: str = "out"
    seed: int = 1
    profiles: list[tuple[int, int]] = field(default_factory=list)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    table1: Table1Config = field(default_factory=Table1Config)
    cache_size: int = DEFAULT_CACHE_SIZE

    def __post_init__(self) -> None:
        names = [c.name for c in self.cameras]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate camera names in {names}")
        missing = [n for n in self.use_cameras if n not in names]
        if missing:
            raise ConfigError(f"use_cameras references unknown cameras {missing}")
        if len(self.use_cameras) < 2:
            raise ConfigError("at least two cameras are required")
        if not (math.isfinite(self.pitch_m) and self.pitch_m > 0):
            raise ConfigError(f"pitch_m must be positive, got {self.pitch_m}")
        if not (math.isfinite(self.nugget) and self.nugget >= 0):
            raise ConfigError(f"nugget must be non-negative, got {self.nugget}")
        if len(self.window) != 2 or self.window[0] * self.window[1] <= 3 or min(self.window) < 1:
            raise ConfigError(f"window must be [rows, cols] with more than 3 pixels, got {self.window}")
        if self.stride < 1:
            raise ConfigError(f"stride must be at least 1, got {self.stride}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sigma_divisor not in SIGMA_DIVISORS:
            raise ConfigError(f"sigma_divisor must be one of {SIGMA_DIVISORS}, got {self.sigma_divisor!r}")
        if self.tau_flat is not None and not self.tau_flat >= 0:
            raise ConfigError(f"tau_flat must be non-negative, got {self.tau_flat}")
        if not 0 <= self.stabilization.reference < len(self.use_cameras):
            raise ConfigError(f"stabilization reference {self.stabilization.reference} out of range")
        if self.cache_size < 0:
            raise ConfigError(f"cache_size must be non-negative, got {self.cache_size}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        unknown = [m for m in self.table1.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown table1 methods {unknown}; expected a subset of {METHODS}")
        if self.table1.reps < 1:
            raise ConfigError(f"table1 reps must be at least 1, got {self.table1.reps}")
        # range and phase checks live on the simulation config
        self.table1.sim_config()
        HeightWind(self.simulation.height_m, self.simulation.v1, self.simulation.v2)

    @property
    def active_cameras(self) -> list[CameraSpec]:
        by_name = {c.name: c for c in self.cameras}
        return [by_name[n] for n in self.use_cameras]

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    def to_dict(self) -> dict:
        """Plain-data form; load_run_config accepts it back unchanged."""
        raw = asdict(self)
        raw["cameras"] = [
            {k: v for k, v in cam.items() if v is not None} for cam in raw["cameras"]
        ]
        raw["grid"]["v1"] = list(self.grid.v1)
        raw["grid"]["v2"] = list(self.grid.v2)
        return _plain(raw)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Fraction):
        return float(value)
    return value


def _pair(value, name: str) -> tuple[int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be a pair [a, b], got {value!r}")
    return int(value[0]), int(value[1])


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in _TRUE | _FALSE:
        return value.strip().lower() in _TRUE
    raise ConfigError(f"expected a boolean, got {value!r}")


def _optional_float(value) -> float | None:
    return None if value is None else float(value)


def _floats(value, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),)
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{name} must be a number or a list of numbers, got {value!r}")
    return tuple(float(v) for v in value)


def run_config_from_dict(raw: dict | None) -> RunConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    try:
        kwargs: dict = {}
        if "cameras" in raw:
            kwargs["cameras"] = [
                CameraSpec(str(c["name"]), float(c["theta"]), c.get("delay")) for c in raw["cameras"]
            ]
        if "use_cameras" in raw:
            kwargs["use_cameras"] = tuple(str(n) for n in raw["use_cameras"])
        for key, cast in (
            ("pitch_m", float), ("nugget", float), ("stride", int), ("mode", str),
            ("tau_flat", _optional_float), ("sigma_divisor", str), ("profile_high", _bool),
            ("out_dir", str), ("seed", int), ("cache_size", int),
        ):
            if key in raw:
                kwargs[key] = cast(raw[key])
        if "matern" in raw:
            kwargs["matern"] = MaternParams(**{k: float(v) for k, v in raw["matern"].items()})
        if "window" in raw:
            kwargs["window"] = _pair(raw["window"], "window")
        if "grid" in raw:
            grid = dict(raw["grid"])
            for key in ("v1", "v2"):
                if key in grid:
                    grid[key] = _floats(grid[key], f"grid.{key}")
            kwargs["grid"] = SearchGrid(**{k: v if k in ("v1", "v2") else float(v) for k, v in grid.items()})
        if "stabilization" in raw:
            stab = raw["stabilization"] or {}
            kwargs["stabilization"] = StabilizationConfig(
                region=_pair(stab["region"], "stabilization.region") if stab.get("region") is not None else None,
                reference=int(stab.get("reference", 0)),
                gains=_floats(stab["gains"], "stabilization.gains") if stab.get("gains") is not None else None,
                offsets=_floats(stab["offsets"], "stabilization.offsets") if stab.get("offsets") is not None else None,
            )
        if "inputs" in raw:
            kwargs["inputs"] = {str(k): str(v) for k, v in (raw["inputs"] or {}).items()}
        if "profiles" in raw:
            kwargs["profiles"] = [_pair(p, "profiles entry") for p in raw["profiles"] or []]
        if "simulation" in raw:
            sim = dict(raw["simulation"] or {})
            if "shape" in sim:
                sim["shape"] = _pair(sim["shape"], "simulation.shape")
            kwargs["simulation"] = SimulationConfig(**sim)
        if "table1" in raw:
            t1 = dict(raw["table1"] or {})
            if "methods" in t1:
                t1["methods"] = tuple(str(m) for m in t1["methods"])
            kwargs["table1"] = Table1Config(**t1)
        unknown = set(raw) - set(RunConfig.__dataclass_fields__) - {MANIFEST_RUN_KEY}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ConfigError(f"invalid config: {e}") from e


def load_run_config(config_path: str | Path) -> RunConfig:
    """Load and validate a run config from a YAML or JSON file.

    An empty path means "all defaults". Raises ConfigError when the file is
    missing, unparsable, or violates a field invariant.
    """
    if not config_path:
        return RunConfig()
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            # YAML 1.1 reads exponent floats such as 1e-08 as strings
            raw = json.load(f) if path.suffix.lower() == ".json" else yaml.safe_load(f)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    return run_config_from_dict(raw)


def env_workers() -> int:
    raw = (os.environ.get("CLOUDHEIGHT_WORKERS") or "1").strip()
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"CLOUDHEIGHT_WORKERS must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError(f"CLOUDHEIGHT_WORKERS must be at least 1, got {workers}")
    return workers
