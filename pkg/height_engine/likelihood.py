"""Super-resolution likelihoods for interlaced patches.

Low clouds
----------
Each camera block k is filtered by its own degree-1 annihilator L_k, removing
the per-camera affine brightness trend. With L = diag(L_1, ..., L_n) and
Sigma~ = L Sigma L^T, the filtered data Ly ~ N(0, D Sigma~ D) where D carries a
scale sigma_k per camera block. The scales are estimated per patch, refined by
one Newton step towards the stationary point of

    R~ s - (m - 3) / s = 0        (s = 1 / sigma, elementwise)

and plugged into

    -1/2 log|Sigma~| - (m - 3) sum_k log sigma_k - 1/2 s^T R~ s.

High clouds
-----------
After brightness stabilization one joint annihilator H removes a common
affine trend; the common scale is marginalized under a flat prior, giving

    -1/2 log|Sigma~| - (nm - 4)/2 log(y^T H^T Sigma~^-1 H y),   Sigma~ = H Sigma H^T.

Additive constants are dropped everywhere: values are only comparable between
candidates of the same interlace size.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve, eigh

from height_engine.errors import (
    DegenerateInterlaceError,
    FlatPatchError,
    UntexturedRegionError,
)
from height_engine.gauss import DEFAULT_NUGGET, MaternParams, cov_matrix
from height_engine.raster import Patch, Raster, SuperImage, design_matrix, poly_annihilator
from height_engine.store import GeometryStore, NullGeometryStore, geometry_key

logger = logging.getLogger(__name__)

# Filtered covariances with eigenvalue ratio below this are singular.
EIGEN_RTOL = 1e-14
# Annihilated signal smaller than this fraction of the raw signal is "flat".
FLAT_RTOL = 1e-10

SIGMA_DIVISORS = ("m", "m-3")


# ---------------------------------------------------------------------------
# Scale estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleEstimate:
    sigma: float
    flat: bool


def _is_flat(filtered: np.ndarray, raw: np.ndarray) -> bool:
    return float(np.linalg.norm(filtered)) <= FLAT_RTOL * float(np.linalg.norm(raw))


def _divisor(m: int, sigma_divisor: str) -> int:
    if sigma_divisor not in SIGMA_DIVISORS:
        raise ValueError(f"sigma_divisor must be one of {SIGMA_DIVISORS}, got {sigma_divisor!r}")
    return m if sigma_divisor == "m" else m - 3


def sigma_hat(
    patch: Patch,
    p: MaternParams,
    nugget: float = DEFAULT_NUGGET,
    sigma_divisor: str = "m",
) -> ScaleEstimate:
    """Per-patch scale: sqrt((L y)^T (L Sigma L^T)^-1 (L y) / m)."""
    annihilator = poly_annihilator(patch.coords).matrix
    z = annihilator @ patch.values
    if _is_flat(z, patch.values):
        return ScaleEstimate(0.0, True)
    filtered_cov = annihilator @ cov_matrix(patch.coords, p, nugget) @ annihilator.T
    quad = float(z @ cho_solve(cho_factor(filtered_cov), z))
    return ScaleEstimate(float(np.sqrt(quad / _divisor(patch.size, sigma_divisor))), False)


def newton_sigma(r_tilde: np.ndarray, sigma_hat: np.ndarray, m: int) -> np.ndarray:
    """One Newton step on 1/sigma from the per-patch estimates.

    Falls back to ``sigma_hat`` when any component of the updated inverse
    scale is non-positive.
    """
    r_tilde = np.atleast_2d(np.asarray(r_tilde, dtype=float))
    sigma_hat = np.atleast_1d(np.asarray(sigma_hat, dtype=float))
    if np.any(sigma_hat <= 0):
        raise ValueError("sigma_hat must be strictly positive")
    q = m - 3
    inv = 1.0 / sigma_hat
    d2 = sigma_hat ** 2
    jacobian = r_tilde + q * np.diag(d2)
    step = np.linalg.solve(jacobian, q * d2 * inv - r_tilde @ inv)
    updated = inv + step
    if np.array_equal(updated, inv):
        return sigma_hat.copy()
    if not np.all(np.isfinite(updated)) or np.any(updated <= 0):
        logger.debug("Newton update non-positive (%s); keeping per-patch scales", updated)
        return sigma_hat.copy()
    return 1.0 / updated


# ---------------------------------------------------------------------------
# Low-cloud likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowCloudGeometry:
    """Everything that depends on locations only, shared between data vectors."""

    annihilators: tuple[np.ndarray, ...]
    inv_sqrt: np.ndarray
    logdet: float
    block_factors: tuple[tuple[np.ndarray, bool], ...]
    filtered_slices: tuple[slice, ...]


@dataclass(frozen=True)
class LowCloudWorkspace:
    geometry: LowCloudGeometry
    filtered: tuple[np.ndarray, ...]
    r_blocks: tuple[np.ndarray, ...]
    r_tilde: np.ndarray
    sigma_hat: np.ndarray
    sigma_newton: np.ndarray
    m: int
    n: int

    @property
    def annihilators(self) -> tuple[np.ndarray, ...]:
        return self.geometry.annihilators

    @property
    def full_annihilator(self) -> np.ndarray:
        return block_diag(*self.geometry.annihilators)

    @property
    def inv_sqrt(self) -> np.ndarray:
        return self.geometry.inv_sqrt

    @property
    def logdet(self) -> float:
        return self.geometry.logdet

    def loglik(self, sigma: np.ndarray) -> float:
        inv = 1.0 / np.asarray(sigma, dtype=float)
        return float(
            -0.5 * self.logdet
            - (self.m - 3) * np.sum(np.log(sigma))
            - 0.5 * inv @ self.r_tilde @ inv
        )


def _block_size(si: SuperImage) -> int:
    sizes = set(si.block_sizes)
    if len(sizes) != 1:
        raise ValueError(f"all blocks must have the same size, got {si.block_sizes}")
    m = sizes.pop()
    if m <= 3:
        raise ValueError("blocks need more than 3 pixels")
    return m


def _symmetric_eigen(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eigvals, eigvecs = eigh(0.5 * (matrix + matrix.T))
    if eigvals[0] <= EIGEN_RTOL * eigvals[-1]:
        raise DegenerateInterlaceError(
            f"degenerate interlace: filtered covariance eigenvalues span "
            f"[{eigvals[0]:.3e}, {eigvals[-1]:.3e}]"
        )
    return eigvals, eigvecs


def build_low_geometry(si: SuperImage, p: MaternParams, nugget: float = DEFAULT_NUGGET) -> LowCloudGeometry:
    blocks = si.split()
    annihilators = tuple(poly_annihilator(b.coords).matrix for b in blocks)
    full = block_diag(*annihilators)
    filtered_cov = full @ cov_matrix(si.coords, p, nugget) @ full.T
    eigvals, eigvecs = _symmetric_eigen(filtered_cov)
    inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T

    edges = np.concatenate([[0], np.cumsum([a.shape[0] for a in annihilators])])
    slices = tuple(slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))
    factors = tuple(cho_factor(filtered_cov[s, s]) for s in slices)
    return LowCloudGeometry(
        annihilators=annihilators,
        inv_sqrt=inv_sqrt,
        logdet=float(np.sum(np.log(eigvals))),
        block_factors=factors,
        filtered_slices=slices,
    )


def build_low_workspace(
    si: SuperImage,
    p: MaternParams,
    nugget: float = DEFAULT_NUGGET,
    store: GeometryStore | None = None,
    sigma_divisor: str = "m",
) -> LowCloudWorkspace:
    m = _block_size(si)
    store = NullGeometryStore() if store is None else store
    key = geometry_key("low", si.coords, si.block_sizes, p, nugget)
    geometry = store.load(key)
    if geometry is None:
        geometry = build_low_geometry(si, p, nugget)
        store.save(key, geometry)

    blocks = si.split()
    filtered = tuple(a @ b.values for a, b in zip(geometry.annihilators, blocks))
    sigma = np.empty(len(blocks))
    divisor = _divisor(m, sigma_divisor)
    for k, (z, block, factor) in enumerate(zip(filtered, blocks, geometry.block_factors)):
        if _is_flat(z, block.values):
            raise FlatPatchError(f"flat patch: block {k} carries no signal beyond an affine trend")
        sigma[k] = np.sqrt(float(z @ cho_solve(factor, z)) / divisor)

    r_blocks = tuple(geometry.inv_sqrt[:, s] for s in geometry.filtered_slices)
    u = np.column_stack([r @ z for r, z in zip(r_blocks, filtered)])
    r_tilde = u.T @ u
    return LowCloudWorkspace(
        geometry=geometry,
        filtered=filtered,
        r_blocks=r_blocks,
        r_tilde=r_tilde,
        sigma_hat=sigma,
        sigma_newton=newton_sigma(r_tilde, sigma, m),
        m=m,
        n=len(blocks),
    )


def low_cloud_loglik(
    si: SuperImage,
    p: MaternParams,
    nugget: float = DEFAULT_NUGGET,
    newton: bool = True,
    store: GeometryStore | None = None,
    sigma_divisor: str = "m",
) -> float:
    ws = build_low_workspace(si, p, nugget, store, sigma_divisor)
    return ws.loglik(ws.sigma_newton if newton else ws.sigma_hat)


# ---------------------------------------------------------------------------
# High-cloud likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HighCloudGeometry:
    trend_basis: np.ndarray
    precision: np.ndarray
    logdet: float


def build_high_geometry(si: SuperImage, p: MaternParams, nugget: float = DEFAULT_NUGGET) -> HighCloudGeometry:
    h = poly_annihilator(si.coords).matrix
    eigvals, eigvecs = _symmetric_eigen(h @ cov_matrix(si.coords, p, nugget) @ h.T)
    projected = h.T @ eigvecs / np.sqrt(eigvals)
    basis, _ = np.linalg.qr(design_matrix(si.coords))
    return HighCloudGeometry(
        trend_basis=basis,
        precision=projected @ projected.T,
        logdet=float(np.sum(np.log(eigvals))),
    )


def high_cloud_terms(
    si: SuperImage,
    p: MaternParams,
    nugget: float = DEFAULT_NUGGET,
    store: GeometryStore | None = None,
) -> tuple[float, float]:
    """Return (log|Sigma~|, y^T H^T Sigma~^-1 H y) for a stabilized super-image."""
    store = NullGeometryStore() if store is None else store
    key = geometry_key("high", si.coords, si.block_sizes, p, nugget)
    geometry = store.load(key)
    if geometry is None:
        geometry = build_high_geometry(si, p, nugget)
        store.save(key, geometry)
    y = si.values
    residual = y - geometry.trend_basis @ (geometry.trend_basis.T @ y)
    if _is_flat(residual, y):
        raise FlatPatchError("flat patch: super-image carries no signal beyond an affine trend")
    return geometry.logdet, float(y @ geometry.precision @ y)


def high_cloud_loglik(
    si: SuperImage,
    p: MaternParams,
    nugget: float = DEFAULT_NUGGET,
    store: GeometryStore | None = None,
) -> float:
    logdet, quad = high_cloud_terms(si, p, nugget, store)
    total = len(si.values)
    return float(-0.5 * logdet - 0.5 * (total - 4) * np.log(quad))


def high_cloud_profile_loglik(
    si: SuperImage,
    p: MaternParams,
    nugget: float = DEFAULT_NUGGET,
    store: GeometryStore | None = None,
) -> float:
    """Profile over the common scale instead of marginalizing it."""
    logdet, quad = high_cloud_terms(si, p, nugget, store)
    total = len(si.values)
    return float(-0.5 * logdet - 0.5 * (total - 3) * np.log(quad))


# ---------------------------------------------------------------------------
# Brightness stabilization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilizationMap:
    gains: tuple[float, ...]
    offsets: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.gains) != len(self.offsets):
            raise ValueError("gains and offsets must have the same length")
        if any(g <= 0 for g in self.gains):
            raise ValueError(f"stabilization gains must be positive, got {self.gains}")

    def apply(self, images: list[Raster]) -> list[Raster]:
        if len(images) != len(self.gains):
            raise ValueError(f"{len(images)} images but {len(self.gains)} stabilization terms")
        return [img.affine(g, b) for img, g, b in zip(images, self.gains, self.offsets)]

    @classmethod
    def identity(cls, n: int) -> "StabilizationMap":
        return cls((1.0,) * n, (0.0,) * n)


def stabilize(images: list[Raster], region: tuple[int, int], ref: int = 0) -> StabilizationMap:
    """Match first and second moments over a column range to the reference camera."""
    c0, c1 = region
    if not 0 <= c0 < c1:
        raise ValueError(f"stabilization region must be a non-empty column range, got {region}")
    moments = []
    for k, img in enumerate(images):
        if c1 > img.cols:
            raise ValueError(f"stabilization region {region} exceeds {img.cols} columns")
        values = img.values[:, c0:c1]
        std = float(values.std())
        if std == 0.0:
            raise UntexturedRegionError(f"untextured stabilization region in camera {k}")
        moments.append((float(values.mean()), std))

    mean_ref, std_ref = moments[ref]
    gains, offsets = [], []
    for k, (mean_k, std_k) in enumerate(moments):
        if k == ref:
            gains.append(1.0)
            offsets.append(0.0)
            continue
        gain = std_ref / std_k
        gains.append(gain)
        offsets.append(mean_ref - gain * mean_k)
    logger.info("Stabilization gains=%s offsets=%s", np.round(gains, 4), np.round(offsets, 4))
    return StabilizationMap(tuple(gains), tuple(offsets))


def column_profiles(images: list[Raster]) -> tuple[np.ndarray, np.ndarray]:
    """Per-column means and variances, shape (n_images, cols)."""
    means = np.vstack([img.values.mean(axis=0) for img in images])
    variances = np.vstack([img.values.var(axis=0) for img in images])
    return means, variances


# ---------------------------------------------------------------------------
# Correlation baseline
# ---------------------------------------------------------------------------

def correlation_metric(a: Patch, b: Patch) -> float:
    if a.size != b.size:
        raise ValueError(f"patch sizes differ: {a.size} vs {b.size}")
    da = a.values - a.values.mean()
    db = b.values - b.values.mean()
    na, nb = np.linalg.norm(da), np.linalg.norm(db)
    if na == 0.0 or nb == 0.0:
        raise FlatPatchError("flat patch: correlation needs non-constant patches")
    return float(np.clip(da @ db / (na * nb), -1.0, 1.0))
