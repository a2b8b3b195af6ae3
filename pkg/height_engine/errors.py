"""Exception hierarchy shared by the engine, the matchers and the CLI."""


class CloudHeightError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CloudHeightError):
    """A configuration value violates the invariants of its home type."""


class RasterIOError(CloudHeightError):
    """A raster file could not be read or written.

    ``offset`` names the byte offset (PGM) or 1-based line number (CSV) where
    parsing failed, when known.
    """

    def __init__(self, message: str, path: str = "", offset: int | None = None):
        where = f" at offset {offset}" if offset is not None else ""
        prefix = f"{path}: " if path else ""
        super().__init__(f"{prefix}{message}{where}")
        self.path = path
        self.offset = offset


class NoPatchesError(CloudHeightError):
    """interlace() was called with an empty list."""


class WindowOutsideRasterError(CloudHeightError):
    """The (shifted) window does not lie fully inside the raster."""


class NumericalError(CloudHeightError):
    """Base class for numerical failures."""


class DegenerateDesignError(NumericalError):
    """Locations are not unisolvent for degree-1 polynomials."""


class DegenerateAnchorsError(NumericalError):
    """The anchors of the generalized covariance are collinear."""


class NotPSDError(NumericalError):
    """A covariance matrix is badly indefinite."""


class DegenerateInterlaceError(NumericalError):
    """The filtered covariance of an interlaced image is singular."""


class FlatPatchError(NumericalError):
    """A patch carries no signal once affine trends are removed."""


class UntexturedRegionError(NumericalError):
    """A stabilization region has zero variance in some camera."""


# Raised per candidate and recorded as invalid by the estimator.
INVALID_CANDIDATE_ERRORS = (
    WindowOutsideRasterError,
    DegenerateInterlaceError,
    DegenerateDesignError,
    FlatPatchError,
)
