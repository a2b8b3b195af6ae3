"""Covariance kernels, covariance assembly and seeded Gaussian sampling.

Two models live here:

* the Matérn autocovariance used by every likelihood,

      K(r) = sigma / (2**(nu-1) Gamma(nu)) * s**nu * K_nu(s),  s = 2 sqrt(nu) r / rho,

  with K(0) = sigma;
* the power-law generalized covariance sigma**2 |c (s - t)|**alpha
  (2 < alpha < 4), completed into a proper covariance by pinning the field at
  three anchors through degree-1 Lagrange polynomials. Any completion agrees
  with the power law on contrasts that annihilate degree-1 polynomials.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist, pdist, squareform

from height_engine.errors import ConfigError, DegenerateAnchorsError, NotPSDError

logger = logging.getLogger(__name__)

DEFAULT_NUGGET = 1e-8
PSD_TOLERANCE = 1e-8


@dataclass(frozen=True)
class MaternParams:
    sigma: float = 1.0
    rho: float = 4.0
    nu: float = 4.0 / 3.0

    def __post_init__(self) -> None:
        for name in ("sigma", "rho", "nu"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"Matérn {name} must be positive, got {value}")

    def with_nu(self, nu: float) -> "MaternParams":
        return MaternParams(self.sigma, self.rho, nu)


@dataclass(frozen=True)
class GenCovParams:
    sigma: float = 15.0
    exponent: float = 8.0 / 3.0
    space_scale: float = 10.0
    anchors: tuple[tuple[float, float], ...] = field(
        default=((0.0, 0.0), (6.0 / 500.0, 0.0), (0.0, 1.0))
    )

    def __post_init__(self) -> None:
        if not 2.0 < self.exponent < 4.0:
            raise ConfigError(f"power exponent must lie in (2, 4), got {self.exponent}")
        if len(self.anchors) != 3:
            raise ConfigError("exactly three anchors are required")


def bessel_k(nu: float, x: float | np.ndarray) -> float | np.ndarray:
    """Modified Bessel function of the second kind K_nu(x), x > 0."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise ValueError(f"bessel_k domain error: x must be positive, got {x}")
    return special.kv(nu, x)


def matern(r: float | np.ndarray, p: MaternParams) -> float | np.ndarray:
    """Matérn autocovariance at lag(s) r >= 0."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("lags must be non-negative")
    scaled = 2.0 * math.sqrt(p.nu) * r_arr / p.rho
    prefactor = p.sigma / (2.0 ** (p.nu - 1.0) * special.gamma(p.nu))
    positive = scaled > 0
    safe = np.where(positive, scaled, 1.0)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        body = prefactor * safe ** p.nu * special.kv(p.nu, safe)
    # kv underflows to 0 at huge lags, which is the correct limit
    body = np.where(np.isfinite(body), body, 0.0)
    out = np.where(positive, body, p.sigma)
    return float(out) if out.ndim == 0 else out


def cov_matrix(coords: np.ndarray, p: MaternParams, nugget: float = DEFAULT_NUGGET) -> np.ndarray:
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if len(coords) == 1:
        return np.array([[p.sigma * (1.0 + nugget)]])
    dist = squareform(pdist(coords))
    cov = matern(dist, p)
    cov[np.diag_indices_from(cov)] += nugget * p.sigma
    return cov


def power_law(dist: np.ndarray, g: GenCovParams) -> np.ndarray:
    return g.sigma ** 2 * (g.space_scale * np.asarray(dist, dtype=float)) ** g.exponent


def lagrange_weights(coords: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Rows hold the three degree-1 Lagrange polynomials of ``anchors`` at ``coords``."""
    anchor_design = np.column_stack([np.ones(3), anchors])
    scale = np.abs(anchor_design).max()
    if abs(np.linalg.det(anchor_design / scale)) < 1e-12:
        raise DegenerateAnchorsError("degenerate anchors: the three anchors are collinear")
    design = np.column_stack([np.ones(len(coords)), coords])
    weights = np.linalg.solve(anchor_design.T, design.T).T
    # exact unit rows at the anchors pin the field to zero there
    for j, anchor in enumerate(anchors):
        hit = np.all(coords == anchor, axis=1)
        weights[hit] = np.eye(3)[j]
    return weights


def sim_cov_matrix(coords: np.ndarray, g: GenCovParams) -> np.ndarray:
    """Covariance of the power-law field pinned at the anchors."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    anchors = np.asarray(g.anchors, dtype=float)
    lam = lagrange_weights(coords, anchors)
    g_ss = power_law(squareform(pdist(coords)) if len(coords) > 1 else np.zeros((1, 1)), g)
    g_su = power_law(cdist(coords, anchors), g)
    g_uu = power_law(cdist(anchors, anchors), g)
    cross = lam @ g_su.T
    cov = g_ss - cross - cross.T + lam @ g_uu @ lam.T
    return 0.5 * (cov + cov.T)


class GaussianSampler:
    """Mean-zero Gaussian draws from a fixed covariance.

    The symmetric factor is computed once from an eigendecomposition; tiny
    negative eigenvalues are clamped to zero. Draws depend only on the seed.
    """

    def __init__(self, cov: np.ndarray):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError(f"covariance must be square, got shape {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise NotPSDError("not PSD: covariance is not symmetric")
        eigvals, eigvecs = np.linalg.eigh(0.5 * (cov + cov.T))
        top = max(eigvals.max(initial=0.0), 0.0)
        if eigvals.size and eigvals.min() < -PSD_TOLERANCE * top:
            raise NotPSDError(
                f"not PSD: minimum eigenvalue {eigvals.min():.3e} against maximum {top:.3e}"
            )
        self._factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
        logger.debug("Gaussian sampler ready: dim=%d, max eigenvalue %.3e", cov.shape[0], top)

    @property
    def dim(self) -> int:
        return self._factor.shape[0]

    def draw(self, seed: int, size: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if size is None:
            return self._factor @ rng.standard_normal(self.dim)
        return (self._factor @ rng.standard_normal((self.dim, size))).T


def sample_gaussian(cov: np.ndarray, seed: int) -> np.ndarray:
    return GaussianSampler(cov).draw(seed)


# Second increments Y(x + 2d) - 2 Y(x + d) + Y(x) annihilate degree-1 trends,
# so both models can be compared on them.
SECOND_DIFFERENCE = np.array([1.0, -2.0, 1.0])


def second_increment_variance(lag: float, kernel) -> float:
    """Variance of a second increment at spacing ``lag`` under ``kernel(dist)``."""
    points = np.array([0.0, lag, 2.0 * lag])
    dist = np.abs(points[:, None] - points[None, :])
    return float(SECOND_DIFFERENCE @ kernel(dist) @ SECOND_DIFFERENCE)


def increment_loglog_slope(lags: np.ndarray, kernel) -> float:
    """Least-squares slope of log second-increment variance against log lag."""
    lags = np.asarray(lags, dtype=float)
    variances = np.array([second_increment_variance(lag, kernel) for lag in lags])
    slope, _ = np.polyfit(np.log(lags), np.log(variances), 1)
    return float(slope)
