"""Grid search over height/wind candidates and sliding-window traversal.

For one window, every candidate (h, v1, v2) is turned into per-camera shifts,
the shifted patches are cut from each camera and the matcher scores them.
Candidates whose patches leave a raster or whose workspace is degenerate are
recorded as invalid and never take part in the argmax.

A profile is flagged invalid when fewer than half of the candidates are
valid, when its maximum sits on the lowest or highest valid height, or when
it is too flat: max minus median below the matcher's ``tau_flat`` (natural-log
units for the likelihoods, correlation units for the baseline). The
valid heights span the whole grid unless candidates near an end fell off the
raster. The height map keeps the estimate of every window, valid or not,
next to the flag.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from height_engine.errors import INVALID_CANDIDATE_ERRORS, ConfigError
from height_engine.geometry import DEFAULT_PITCH_M, CameraSpec, HeightWind, shifts_for_bank
from height_engine.raster import Raster, extract_patch
from matchers.base_matcher import BaseMatcher

logger = logging.getLogger(__name__)

MIN_VALID_FRACTION = 0.5
DEFAULT_WINDOW = (15, 16)


@dataclass(frozen=True)
class SearchGrid:
    """Heights h_min + k * h_step (k >= 1) up to h_max; h_min itself is excluded."""

    h_min: float = 0.0
    h_max: float = 30000.0
    h_step: float = 100.0
    v1: tuple[float, ...] = (0.0,)
    v2: tuple[float, ...] = (0.0,)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.h_step) and self.h_step > 0):
            raise ConfigError(f"h_step must be positive, got {self.h_step}")
        if not self.h_min < self.h_max:
            raise ConfigError(f"h_min must be below h_max, got {self.h_min} >= {self.h_max}")
        if self.h_min < 0:
            raise ConfigError(f"h_min must be non-negative, got {self.h_min}")
        if not self.v1 or not self.v2:
            raise ConfigError("wind candidate lists must be non-empty")
        object.__setattr__(self, "v1", tuple(float(v) for v in self.v1))
        object.__setattr__(self, "v2", tuple(float(v) for v in self.v2))

    def heights(self) -> np.ndarray:
        # the tolerance keeps h_max on the grid despite float steps
        count = int(math.floor((self.h_max - self.h_min) / self.h_step + 1e-9))
        return self.h_min + self.h_step * np.arange(1, count + 1)

    def candidates(self) -> list[HeightWind]:
        """Height-major order, so the first maximum is the smallest height."""
        return [
            HeightWind(float(h), v1, v2)
            for h in self.heights()
            for v1 in self.v1
            for v2 in self.v2
        ]


@dataclass(frozen=True)
class Window:
    origin: tuple[int, int]
    size: tuple[int, int] = DEFAULT_WINDOW

    @property
    def midpoint(self) -> tuple[float, float]:
        return (
            self.origin[0] + (self.size[0] - 1) / 2.0,
            self.origin[1] + (self.size[1] - 1) / 2.0,
        )


@dataclass(frozen=True)
class LikelihoodProfile:
    candidates: tuple[HeightWind, ...]
    logliks: np.ndarray
    best_index: int | None
    valid: bool
    flatness: float
    reason: str = ""

    @property
    def best(self) -> HeightWind | None:
        return None if self.best_index is None else self.candidates[self.best_index]

    @property
    def valid_fraction(self) -> float:
        return float(np.mean(np.isfinite(self.logliks))) if len(self.logliks) else 0.0


@dataclass(frozen=True)
class HeightMap:
    """Per-window estimates; cell (i, j) belongs to the window at midpoint (row_midpoints[i], col_midpoints[j])."""

    heights: np.ndarray
    valid: np.ndarray
    flatness: np.ndarray
    row_midpoints: np.ndarray
    col_midpoints: np.ndarray
    profiles: dict[tuple[int, int], LikelihoodProfile] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    @property
    def coverage(self) -> float:
        return float(self.valid.mean()) if self.valid.size else 0.0


def evaluate_candidate(
    scene: list[Raster],
    window: Window,
    hw: HeightWind,
    matcher: BaseMatcher,
    cams: list[CameraSpec],
    pitch: float = DEFAULT_PITCH_M,
) -> float | None:
    """Score one candidate; ``None`` when it is invalid."""
    shifts = shifts_for_bank(hw, cams, pitch)
    try:
        patches = [
            extract_patch(raster, window.origin, window.size, shift)
            for raster, shift in zip(scene, shifts)
        ]
        return matcher.score(patches)
    except INVALID_CANDIDATE_ERRORS as e:
        logger.debug("Candidate %s at window %s invalid: %s", hw, window.origin, e)
        return None


def search(
    scene: list[Raster],
    window: Window,
    grid: SearchGrid,
    matcher: BaseMatcher,
    cams: list[CameraSpec],
    pitch: float = DEFAULT_PITCH_M,
    tau_flat: float | None = None,
) -> LikelihoodProfile:
    """Score every candidate of ``grid`` at ``window``; ``tau_flat`` overrides the matcher's threshold."""
    candidates = tuple(grid.candidates())
    if not candidates:
        raise ConfigError("search grid holds no candidates")
    scores = [evaluate_candidate(scene, window, hw, matcher, cams, pitch) for hw in candidates]
    logliks = np.array([np.nan if s is None else s for s in scores], dtype=float)
    finite = np.isfinite(logliks)

    if not finite.any():
        return LikelihoodProfile(candidates, logliks, None, False, 0.0, "no valid candidate")

    threshold = matcher.tau_flat if tau_flat is None else tau_flat
    best = int(np.nanargmax(logliks))
    flatness = float(np.nanmax(logliks) - np.nanmedian(logliks))
    # off-raster candidates cut the grid short, so the edge is taken over valid heights
    valid_heights = [hw.h for hw, ok in zip(candidates, finite) if ok]
    reason = ""
    if finite.mean() < MIN_VALID_FRACTION:
        reason = f"only {finite.sum()} of {len(candidates)} candidates valid"
    elif candidates[best].h in (min(valid_heights), max(valid_heights)):
        reason = f"maximum on the search boundary at h={candidates[best].h:g}"
    elif flatness < threshold:
        reason = f"flat profile ({flatness:.3g} < {threshold:g})"
    if reason:
        logger.debug("Window %s invalid: %s", window.origin, reason)
    return LikelihoodProfile(candidates, logliks, best, not reason, flatness, reason)


def window_origins(shape: tuple[int, int], size: tuple[int, int], stride: int = 1) -> tuple[list[int], list[int]]:
    rows, cols = shape
    if stride < 1:
        raise ConfigError(f"stride must be at least 1, got {stride}")
    if size[0] > rows or size[1] > cols:
        raise ConfigError(f"window {size} does not fit a {rows}x{cols} scene")
    return list(range(0, rows - size[0] + 1, stride)), list(range(0, cols - size[1] + 1, stride))


def sliding_height_map(
    scene: list[Raster],
    grid: SearchGrid,
    matcher: BaseMatcher,
    cams: list[CameraSpec],
    window_size: tuple[int, int] = DEFAULT_WINDOW,
    stride: int = 1,
    pitch: float = DEFAULT_PITCH_M,
    tau_flat: float | None = None,
    workers: int = 1,
    keep_profiles: frozenset[tuple[int, int]] = frozenset(),
) -> HeightMap:
    """Run one search per window position over the reference camera.

    ``keep_profiles`` names window origins whose full profiles are returned.
    """
    if len(scene) != len(cams):
        raise ConfigError(f"{len(scene)} rasters for {len(cams)} cameras")
    row_origins, col_origins = window_origins((scene[0].rows, scene[0].cols), window_size, stride)
    windows = [Window((r, c), window_size) for r in row_origins for c in col_origins]
    logger.info(
        "Searching %d windows (%dx%d) with %d candidates each, %d worker(s)",
        len(windows), window_size[0], window_size[1], len(grid.candidates()), workers,
    )

    def _run(window: Window) -> LikelihoodProfile:
        return search(scene, window, grid, matcher, cams, pitch, tau_flat)

    step = max(1, len(windows) // 10)
    profiles: list[LikelihoodProfile] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for i, profile in enumerate(pool.map(_run, windows), start=1):
            profiles.append(profile)
            if i % step == 0:
                logger.info("Searched %d/%d windows", i, len(windows))

    shape = (len(row_origins), len(col_origins))
    heights = np.array([np.nan if p.best is None else p.best.h for p in profiles]).reshape(shape)
    valid = np.array([p.valid for p in profiles], dtype=bool).reshape(shape)
    flatness = np.array([p.flatness for p in profiles]).reshape(shape)
    kept = {w.origin: p for w, p in zip(windows, profiles) if w.origin in keep_profiles}
    height_map = HeightMap(
        heights=heights,
        valid=valid,
        flatness=flatness,
        row_midpoints=np.array(row_origins) + (window_size[0] - 1) / 2.0,
        col_midpoints=np.array(col_origins) + (window_size[1] - 1) / 2.0,
        profiles=kept,
    )
    logger.info("Height map %dx%d, coverage %.3f", shape[0], shape[1], height_map.coverage)
    return height_map
