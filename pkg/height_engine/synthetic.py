"""Synthetic multi-camera scenes drawn from the Matérn model.

Camera k sees the latent field displaced by its parallax: its pixel (r, c)
carries Y(r - s_k, c - a_k), with s_k and a_k the along- and across-track
shifts of the camera against the reference. All cameras are drawn jointly
from one latent field, so the scene is exactly consistent with the
interlacing model at the chosen height and wind.
"""

import logging

import numpy as np

from height_engine.gauss import DEFAULT_NUGGET, GaussianSampler, MaternParams, cov_matrix
from height_engine.geometry import DEFAULT_PITCH_M, CameraSpec, HeightWind, shifts_for_bank
from height_engine.raster import Raster

logger = logging.getLogger(__name__)


class SceneSimulator:
    """Seeded draws of a scene; the covariance is factorized once."""

    def __init__(
        self,
        cams: list[CameraSpec],
        shape: tuple[int, int],
        hw: HeightWind,
        params: MaternParams = MaternParams(),
        pitch: float = DEFAULT_PITCH_M,
        nugget: float = DEFAULT_NUGGET,
        gains: tuple[float, ...] | None = None,
        offsets: tuple[float, ...] | None = None,
    ):
        rows, cols = shape
        if rows < 1 or cols < 1:
            raise ValueError(f"scene shape must be positive, got {shape}")
        self.cams = list(cams)
        self.shape = (rows, cols)
        self.hw = hw
        self.pitch = pitch
        self.gains = tuple(gains) if gains is not None else (1.0,) * len(cams)
        self.offsets = tuple(offsets) if offsets is not None else (0.0,) * len(cams)
        if len(self.gains) != len(cams) or len(self.offsets) != len(cams):
            raise ValueError("one gain and one offset per camera are required")

        ii, jj = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float), indexing="ij")
        grid = np.column_stack([ii.ravel(), jj.ravel()])
        shifts = shifts_for_bank(hw, self.cams, pitch)
        coords = np.vstack([grid - [s.along, s.across] for s in shifts])
        logger.info(
            "Simulating %d cameras of %dx%d at h=%g m (%d latent points)",
            len(cams), rows, cols, hw.h, len(coords),
        )
        self._sampler = GaussianSampler(cov_matrix(coords, params, nugget))

    def draw(self, seed: int) -> list[Raster]:
        values = self._sampler.draw(seed).reshape(len(self.cams), *self.shape)
        return [
            Raster(g * v + b, self.pitch)
            for v, g, b in zip(values, self.gains, self.offsets)
        ]


def simulate_scene(
    cams: list[CameraSpec],
    shape: tuple[int, int],
    hw: HeightWind,
    seed: int,
    params: MaternParams = MaternParams(),
    pitch: float = DEFAULT_PITCH_M,
    nugget: float = DEFAULT_NUGGET,
) -> list[Raster]:
    return SceneSimulator(cams, shape, hw, params, pitch, nugget).draw(seed)
