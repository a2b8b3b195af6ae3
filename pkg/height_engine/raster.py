"""Image containers, patch extraction, interlacing and polynomial annihilators.

A patch pairs a list of 2-D coordinates with a value vector. Coordinates are
(row, col) in pixel units of the reference camera, measured from the origin of
the reference window. A camera window relocated by an integer shift keeps the
local index of each pixel and subtracts the fractional residual, so the
reference camera always sits on the integer grid and all cameras share one
frame.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from height_engine.errors import (
    DegenerateDesignError,
    NoPatchesError,
    WindowOutsideRasterError,
)
from height_engine.geometry import PixelShift

# Singular values below this fraction of the largest are treated as zero.
NULL_SPACE_RCOND = 1e-9
LOG_FLOOR = 1e-6


@dataclass(frozen=True)
class Raster:
    values: np.ndarray
    pitch: float = 275.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"raster values must be a non-empty 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("raster values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_reflectance(cls, reflectance: np.ndarray, pitch: float = 275.0) -> "Raster":
        """Log-transform positive reflectances; corrupt pixels are floored first."""
        clamped = np.maximum(np.asarray(reflectance, dtype=float), LOG_FLOOR)
        return cls(np.log(clamped), pitch)

    def affine(self, gain: float, offset: float) -> "Raster":
        return Raster(gain * self.values + offset, self.pitch)


@dataclass(frozen=True)
class Patch:
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        values = np.asarray(self.values, dtype=float).ravel()
        if coords.shape[0] != values.shape[0]:
            raise ValueError(f"{coords.shape[0]} coordinates but {values.shape[0]} values")
        if values.shape[0] <= 3:
            raise ValueError("a patch needs more than 3 pixels")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SuperImage:
    coords: np.ndarray
    values: np.ndarray
    block_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.coords) == len(self.values) == sum(self.block_sizes)):
            raise ValueError("coordinate count, value count and block sizes disagree")

    @property
    def n_blocks(self) -> int:
        return len(self.block_sizes)

    def block_slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.block_sizes)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def split(self) -> list[Patch]:
        return [Patch(self.coords[s], self.values[s]) for s in self.block_slices()]

    def with_values(self, values: np.ndarray) -> "SuperImage":
        return SuperImage(self.coords, np.asarray(values, dtype=float), self.block_sizes)


@dataclass(frozen=True)
class Annihilator:
    matrix: np.ndarray
    source_coords: np.ndarray
    degree: int = field(default=1)

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        return self.matrix @ other


def extract_patch(
    raster: Raster,
    origin: tuple[int, int],
    size: tuple[int, int],
    shift: PixelShift | None = None,
) -> Patch:
    """Cut the window at ``origin`` relocated by the integer part of ``shift``."""
    shift = shift or PixelShift.zero()
    rows, cols = size
    r0 = origin[0] + shift.int_along
    c0 = origin[1] + shift.int_across
    if r0 < 0 or c0 < 0 or r0 + rows > raster.rows or c0 + cols > raster.cols:
        raise WindowOutsideRasterError(
            f"window outside raster: rows {r0}..{r0 + rows - 1}, cols {c0}..{c0 + cols - 1} "
            f"in a {raster.rows}x{raster.cols} raster"
        )
    ii, jj = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float), indexing="ij")
    coords = np.column_stack([ii.ravel() - shift.frac_along, jj.ravel() - shift.frac_across])
    values = raster.values[r0:r0 + rows, c0:c0 + cols].ravel()
    return Patch(coords, values)


def interlace(patches: list[Patch]) -> SuperImage:
    if not patches:
        raise NoPatchesError("no patches")
    return SuperImage(
        coords=np.vstack([p.coords for p in patches]),
        values=np.concatenate([p.values for p in patches]),
        block_sizes=tuple(p.size for p in patches),
    )


def design_matrix(coords: np.ndarray) -> np.ndarray:
    """Degree-1 monomials [1, row, col] evaluated at each location."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    return np.column_stack([np.ones(len(coords)), coords])


def poly_annihilator(coords: np.ndarray, degree: int = 1) -> Annihilator:
    """Orthonormal rows spanning the null space of the transposed design."""
    if degree != 1:
        raise ValueError("only degree-1 annihilators are supported")
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    p = len(coords)
    if p < 4:
        raise DegenerateDesignError(f"degenerate design: {p} locations, need at least 4")
    basis = null_space(design_matrix(coords).T, rcond=NULL_SPACE_RCOND)
    if basis.shape[1] != p - 3:
        raise DegenerateDesignError("degenerate design: locations are collinear")
    return Annihilator(matrix=basis.T, source_coords=coords, degree=degree)
