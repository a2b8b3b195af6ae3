"""Strip simulation: one power-law field sub-sampled into three images.

The field lives on the strip [0, 6/500] x [0, 1]: three columns 3/500 apart
and 501 fine rows 1/500 apart. Fine rows are dealt round-robin to three
strips, so each image has a square pixel of side 3/500. Strip 2 is brightened
tenfold; strip 3 is discarded except for a 3 x 4 reference patch (three
columns, four rows) anchored at the strip-3 row nearest y = 0.5040, brightened
fivefold.

Row i of strip j sits at fine row 3 i + r_j, r_j = (j - 1 + phase) mod 3. With
the default phase 1, y = 0.5040 (fine row 252) is a strip-3 row.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from height_engine.errors import ConfigError
from height_engine.gauss import GaussianSampler, GenCovParams, sim_cov_matrix
from height_engine.geometry import PixelShift
from height_engine.raster import Patch, Raster, extract_patch

logger = logging.getLogger(__name__)

TRUE_D = Fraction(504, 1000)
PATCH_ROWS = 4
PATCH_COLS = 3


@dataclass(frozen=True)
class SimConfig:
    fine_rows: int = 501
    n_cols: int = 3
    width: Fraction = Fraction(6, 500)
    gencov: GenCovParams = GenCovParams()
    strip2_gain: float = 10.0
    patch_gain: float = 5.0
    anchor_y: Fraction = TRUE_D
    phase: int = 1
    d_min: Fraction = Fraction(4040, 10000)
    d_max: Fraction = Fraction(6040, 10000)
    d_step: Fraction = Fraction(1, 5000)

    def __post_init__(self) -> None:
        for name in ("width", "anchor_y", "d_min", "d_max", "d_step"):
            object.__setattr__(self, name, Fraction(getattr(self, name)).limit_denominator(10 ** 9))
        if self.fine_rows < 3 * PATCH_ROWS or self.n_cols != PATCH_COLS:
            raise ConfigError(f"strip needs >= {3 * PATCH_ROWS} rows and exactly {PATCH_COLS} columns")
        if not 0 <= self.d_min < self.d_max <= 1 or self.d_step <= 0:
            raise ConfigError(f"d grid must lie in [0, 1], got [{self.d_min}, {self.d_max}] step {self.d_step}")
        if not 0 <= self.anchor_y <= 1:
            raise ConfigError(f"patch anchor must lie in [0, 1], got {self.anchor_y}")

    @property
    def dy(self) -> Fraction:
        return Fraction(1, self.fine_rows - 1)

    def strip_offset(self, j: int) -> int:
        """Fine-row residue of strip j (1-based)."""
        return (j - 1 + self.phase) % 3

    def anchor_row(self) -> int:
        """Strip-3 fine row nearest the anchor whose 4-row patch fits the strip."""
        residue = self.strip_offset(3)
        rows = np.arange(residue, self.fine_rows - 3 * (PATCH_ROWS - 1), 3)
        target = self.anchor_y / self.dy
        return int(rows[np.argmin([abs(Fraction(int(r)) - target) for r in rows])])

    def d_grid(self) -> list[Fraction]:
        count = int((self.d_max - self.d_min) / self.d_step)
        return [self.d_min + k * self.d_step for k in range(count + 1)]

    def fine_coords(self) -> np.ndarray:
        """(x, y) of every fine-grid site, row-major in y."""
        xs = np.array([float(self.width * c / (self.n_cols - 1)) for c in range(self.n_cols)])
        ys = np.array([float(self.dy * r) for r in range(self.fine_rows)])
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class StripImages:
    image1: Raster
    image2: Raster
    reference: Patch
    anchor_row: int


class StripSimulator:
    """Seeded draws of the strip field; the covariance is factorized once."""

    def __init__(self, cfg: SimConfig = SimConfig()):
        self.cfg = cfg
        cov = sim_cov_matrix(cfg.fine_coords(), cfg.gencov)
        self._sampler = GaussianSampler(cov)
        logger.info("Strip sampler ready: %d x %d fine grid", cfg.fine_rows, cfg.n_cols)

    def draw(self, seed: int) -> Raster:
        values = self._sampler.draw(seed).reshape(self.cfg.fine_rows, self.cfg.n_cols)
        return Raster(values, pitch=1.0)


def simulate_strip(cfg: SimConfig, seed: int) -> Raster:
    return StripSimulator(cfg).draw(seed)


def extract_three_images(field: Raster, cfg: SimConfig = SimConfig()) -> StripImages:
    if field.rows < 3:
        raise ValueError("the fine grid needs at least 3 rows")
    strip1 = field.values[cfg.strip_offset(1)::3]
    strip2 = field.values[cfg.strip_offset(2)::3]
    anchor = cfg.anchor_row()
    patch_values = field.values[anchor:anchor + 3 * PATCH_ROWS:3]
    ii, jj = np.meshgrid(np.arange(PATCH_ROWS, dtype=float), np.arange(PATCH_COLS, dtype=float), indexing="ij")
    return StripImages(
        image1=Raster(strip1, pitch=1.0),
        image2=Raster(cfg.strip2_gain * strip2, pitch=1.0),
        reference=Patch(np.column_stack([ii.ravel(), jj.ravel()]), cfg.patch_gain * patch_values.ravel()),
        anchor_row=anchor,
    )


def image_row(y: Fraction, strip: int, cfg: SimConfig = SimConfig()) -> Fraction:
    """Fractional row of position y in strip ``strip``'s pixel grid."""
    return (y / cfg.dy - cfg.strip_offset(strip)) / 3


def candidate_patches(images: StripImages, d: Fraction, cfg: SimConfig = SimConfig()) -> list[Patch]:
    """Reference patch plus the image-1 patch at y1 = d and image-2 patch at y2 = 1.9 y* - 0.9 d.

    Coordinates are in image pixels relative to the reference patch; the
    integer part of each location relocates the window and the residual
    enters the coordinates.
    """
    y2 = Fraction(19, 10) * cfg.anchor_y - Fraction(9, 10) * d
    size = (PATCH_ROWS, PATCH_COLS)
    p1 = extract_patch(images.image1, (0, 0), size, PixelShift.from_pixels(image_row(d, 1, cfg)))
    p2 = extract_patch(images.image2, (0, 0), size, PixelShift.from_pixels(image_row(y2, 2, cfg)))
    return [images.reference, p1, p2]
