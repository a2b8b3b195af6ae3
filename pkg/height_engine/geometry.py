"""Camera geometry: height and wind to per-camera image shifts.

Along-track parallax between cameras i and j is

    v2 * (t_i - t_j) + h * (tan(theta_i) - tan(theta_j))

and across-track parallax is v1 * (t_i - t_j). Forward cameras have positive
view angles. Shifts are expressed in pixels of the reference camera grid and
split into an integer relocation plus a residual in [-0.5, 0.5).

Rows of a raster run along-track, columns across-track.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from height_engine.errors import ConfigError

DEFAULT_PITCH_M = 275.0

# Nine-camera bank, forward to aft. Fly-over delays are not tabulated and must
# be configured whenever wind is non-zero.
MISR_CAMERA_ANGLES = (
    ("Df", 70.0),
    ("Cf", 60.0),
    ("Bf", 45.6),
    ("Af", 26.1),
    ("An", 0.0),
    ("Aa", -26.1),
    ("Ba", -45.6),
    ("Ca", -60.0),
    ("Da", -70.0),
)


@dataclass(frozen=True)
class CameraSpec:
    name: str
    theta: float
    delay: float | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.theta) or abs(self.theta) >= 90.0:
            raise ConfigError(f"camera {self.name!r}: view angle {self.theta} outside (-90, 90)")
        if self.delay is not None and not math.isfinite(self.delay):
            raise ConfigError(f"camera {self.name!r}: fly-over delay must be finite")

    @property
    def tan_theta(self) -> float:
        return math.tan(math.radians(self.theta))


def default_camera_bank() -> list[CameraSpec]:
    return [CameraSpec(name, theta) for name, theta in MISR_CAMERA_ANGLES]


@dataclass(frozen=True)
class HeightWind:
    h: float
    v1: float = 0.0
    v2: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(x) for x in (self.h, self.v1, self.v2)):
            raise ConfigError(f"non-finite height/wind {self}")
        if self.h < 0:
            raise ConfigError(f"height must be non-negative, got {self.h}")


@dataclass(frozen=True)
class PixelShift:
    along: float
    across: float
    int_along: int
    int_across: int
    frac_along: float
    frac_across: float

    @classmethod
    def from_pixels(cls, along: float | Fraction, across: float | Fraction = 0.0) -> "PixelShift":
        """Split a real shift into nearest-integer part and residual.

        Accepts Fractions so that callers working on exact rational grids get
        bit-reproducible residuals.
        """
        ia, fa = _split(along)
        ic, fc = _split(across)
        return cls(float(along), float(across), ia, ic, fa, fc)

    @classmethod
    def zero(cls) -> "PixelShift":
        return cls(0.0, 0.0, 0, 0, 0.0, 0.0)


def _split(x: float | Fraction) -> tuple[int, float]:
    # floor(x + 1/2) keeps the residual in [-0.5, 0.5)
    whole = math.floor(x + Fraction(1, 2)) if isinstance(x, Fraction) else math.floor(x + 0.5)
    return int(whole), float(x - whole)


def _delay_difference(hw: HeightWind, cam_i: CameraSpec, cam_j: CameraSpec, wind: float) -> float:
    if wind == 0.0:
        return 0.0
    if cam_i.delay is None or cam_j.delay is None:
        raise ConfigError(
            f"fly-over delays for cameras {cam_i.name!r} and {cam_j.name!r} "
            "are required when wind is non-zero"
        )
    return cam_i.delay - cam_j.delay


def along_track_parallax(
    hw: HeightWind, cam_i: CameraSpec, cam_j: CameraSpec, pitch: float = DEFAULT_PITCH_M
) -> float:
    """Along-track displacement x_i - x_j in meters."""
    if pitch <= 0:
        raise ConfigError(f"pixel pitch must be positive, got {pitch}")
    dt = _delay_difference(hw, cam_i, cam_j, hw.v2)
    return hw.v2 * dt + hw.h * (cam_i.tan_theta - cam_j.tan_theta)


def across_track_parallax(hw: HeightWind, cam_i: CameraSpec, cam_j: CameraSpec) -> float:
    """Across-track displacement in meters."""
    return hw.v1 * _delay_difference(hw, cam_i, cam_j, hw.v1)


def shift_for_camera(
    hw: HeightWind, cam_k: CameraSpec, ref: CameraSpec, pitch: float = DEFAULT_PITCH_M
) -> PixelShift:
    along = along_track_parallax(hw, cam_k, ref, pitch) / pitch
    across = across_track_parallax(hw, cam_k, ref) / pitch
    return PixelShift.from_pixels(along, across)


def shifts_for_bank(
    hw: HeightWind, cams: list[CameraSpec], pitch: float = DEFAULT_PITCH_M
) -> list[PixelShift]:
    """Shifts of every camera relative to the first one in the bank."""
    ref = cams[0]
    return [PixelShift.zero()] + [shift_for_camera(hw, cam, ref, pitch) for cam in cams[1:]]
