"""Unit tests for the interlacing likelihoods, stabilization and correlation.

Oracles are built independently of the code under test: annihilators from a
full SVD of the design, densities from scipy.stats.multivariate_normal and
the scale marginalization from adaptive quadrature.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.linalg import block_diag

from height_engine.errors import FlatPatchError, UntexturedRegionError
from height_engine.gauss import MaternParams, cov_matrix, matern
from height_engine.likelihood import (
    StabilizationMap,
    build_low_workspace,
    column_profiles,
    correlation_metric,
    high_cloud_loglik,
    high_cloud_profile_loglik,
    high_cloud_terms,
    low_cloud_loglik,
    newton_sigma,
    sigma_hat,
    stabilize,
)
from height_engine.raster import Patch, Raster, SuperImage, design_matrix, interlace
from height_engine.store import InMemoryGeometryStore

P = MaternParams()


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _grid(rows: int, cols: int, offset: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float), indexing="ij")
    return np.column_stack([ii.ravel() - offset[0], jj.ravel() - offset[1]])


def _random_super_image(n: int, m: int, seed: int) -> SuperImage:
    """n blocks of m scattered locations with random values of unequal scales."""
    rng = np.random.default_rng(seed)
    patches = [
        Patch(rng.uniform(0.0, 3.0, (m, 2)), (k + 1.0) * rng.standard_normal(m))
        for k in range(n)
    ]
    return interlace(patches)


def _svd_annihilator(coords: np.ndarray) -> np.ndarray:
    u, _, _ = np.linalg.svd(design_matrix(coords), full_matrices=True)
    return u[:, 3:].T


def _dense_low_loglik(si: SuperImage, sigma: np.ndarray) -> float:
    """Log density of the filtered data under N(0, D Sigma~ D), constants included."""
    blocks = si.split()
    full = block_diag(*[_svd_annihilator(b.coords) for b in blocks])
    filtered_cov = full @ cov_matrix(si.coords, P) @ full.T
    scales = np.repeat(sigma, [b.size - 3 for b in blocks])
    cov = filtered_cov * np.outer(scales, scales)
    return float(stats.multivariate_normal(np.zeros(len(cov)), cov).logpdf(full @ si.values))


def _marginal_log_integral(si: SuperImage) -> float:
    """log int_0^inf sigma^-q exp(-Q / (2 sigma^2)) d sigma - 1/2 log|Sigma~| by quadrature."""
    logdet, quad = high_cloud_terms(si, P)
    q = len(si.values) - 3

    def log_integrand(s: float) -> float:
        return -q * math.log(s) - quad / (2.0 * s * s)

    peak = math.sqrt(quad / q)
    top = log_integrand(peak)
    pieces = [
        integrate.quad(lambda s: math.exp(log_integrand(s) - top), lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)[0]
        for lo, hi in ((0.0, peak), (peak, 50.0 * peak), (50.0 * peak, np.inf))
    ]
    return top + math.log(sum(pieces)) - 0.5 * logdet


# ---------------------------------------------------------------------------
# Per-patch scales
# ---------------------------------------------------------------------------

@pytest.mark.unit
def test_affine_patch_is_flat():
    """
    Story: A patch that is exactly a plane carries nothing once the plane is
    removed: the scale estimate is 0 and the patch is flagged flat.
    """
    coords = _grid(3, 3)
    estimate = sigma_hat(Patch(coords, 3.0 + 2.0 * coords[:, 0] - coords[:, 1]), P)
    assert estimate.flat
    assert estimate.sigma == 0.0


@pytest.mark.unit
def test_sigma_hat_is_homogeneous():
    rng = np.random.default_rng(1)
    patch = Patch(_grid(3, 4), rng.standard_normal(12))
    base = sigma_hat(patch, P).sigma
    assert sigma_hat(Patch(patch.coords, -4.0 * patch.values), P).sigma == pytest.approx(4.0 * base, rel=1e-12)


@pytest.mark.unit
def test_sigma_hat_two_by_two_hand_value():
    """
    Story: On the unit 2x2 grid the filter is the single contrast
    (1, -1, -1, 1)/2. For y = (0, 1, 1, 0) the filtered value is -1 and its
    variance is sigma(1 + nugget) - 2 K(1) + K(sqrt 2), so
    sigma_hat^2 = 1 / (variance * 4).
    """
    nugget = 1e-8
    variance = 1.0 + nugget - 2.0 * matern(1.0, P) + matern(math.sqrt(2.0), P)
    expected = math.sqrt(1.0 / variance / 4.0)
    estimate = sigma_hat(Patch(_grid(2, 2), np.array([0.0, 1.0, 1.0, 0.0])), P, nugget)
    assert estimate.sigma == pytest.approx(expected, rel=1e-10)
    assert sigma_hat(Patch(_grid(2, 2), np.array([0.0, 1.0, 1.0, 0.0])), P, nugget, "m-3").sigma == pytest.approx(
        2.0 * expected, rel=1e-10
    )


# ---------------------------------------------------------------------------
# Newton step
# ---------------------------------------------------------------------------

@pytest.mark.unit
def test_newton_fixed_point_is_exact():
    """
    Story: Starting at the stationary point R~ = (m - 3) sigma_hat^2, the
    Newton step changes nothing, bit for bit.
    """
    out = newton_sigma(np.array([[4.0]]), np.array([2.0]), m=4)
    assert out.tolist() == [2.0]


@pytest.mark.unit
@pytest.mark.parametrize("r_tilde, expected", [(4.0, 2.5), (20.0, 10.5)])
def test_newton_single_camera_hand_cases(r_tilde, expected):
    """
    Story: With one camera, m = 4 and sigma_hat = 1, the updated inverse scale
    is 1 + (1 - R~) / (R~ + 1) = 2 / (R~ + 1): 0.4 for R~ = 4 and 2/21 for
    R~ = 20.
    """
    out = newton_sigma(np.array([[r_tilde]]), np.array([1.0]), m=4)
    assert out[0] == pytest.approx(expected, rel=1e-12)


@pytest.mark.unit
def test_newton_falls_back_on_nonpositive_update():
    """
    Story: For two strongly coupled cameras the step drives the second
    inverse scale to about -0.15; the per-patch estimates are returned
    instead.
    """
    r_tilde = np.array([[1.0, 9.9], [9.9, 100.0]])
    out = newton_sigma(r_tilde, np.array([1.0, 1.0]), m=4)
    np.testing.assert_array_equal(out, [1.0, 1.0])


# ---------------------------------------------------------------------------
# Low-cloud likelihood
# ---------------------------------------------------------------------------

@pytest.mark.unit
@pytest.mark.parametrize("n, m, seed", [(1, 8, 0), (2, 4, 1), (2, 6, 2), (3, 4, 3), (1, 12, 4)])
def test_low_loglik_matches_dense_density(n, m, seed):
    """
    Story: Up to the dropped constant -(N/2) log(2 pi), the low-cloud value
    equals the multivariate normal log density of the filtered data at the
    Newton scales, on every instance with nm <= 12.
    """
    si = _random_super_image(n, m, seed)
    ws = build_low_workspace(si, P)
    filtered_dim = n * (m - 3)
    oracle = _dense_low_loglik(si, ws.sigma_newton) + 0.5 * filtered_dim * math.log(2.0 * math.pi)
    assert low_cloud_loglik(si, P) == pytest.approx(oracle, rel=1e-8)


@pytest.mark.unit
def test_workspace_norm_identity_and_single_camera_reduction():
    """
    Story: ||Sigma~^-1/2 D^-1 L y||^2 equals s^T R~ s for any scales; with one
    camera R~ is the scalar (Ly)^T Sigma~^-1 (Ly).
    """
    si = _random_super_image(3, 6, 11)
    ws = build_low_workspace(si, P)
    sigma = np.array([0.7, 1.9, 3.1])
    scaled = np.concatenate([z / s for z, s in zip(ws.filtered, sigma)])
    lhs = float(np.sum((ws.inv_sqrt @ scaled) ** 2))
    assert lhs == pytest.approx((1 / sigma) @ ws.r_tilde @ (1 / sigma), rel=1e-8)

    single = _random_super_image(1, 9, 12)
    ws1 = build_low_workspace(single, P)
    z = ws1.filtered[0]
    filtered_cov = ws1.full_annihilator @ cov_matrix(single.coords, P) @ ws1.full_annihilator.T
    assert ws1.r_tilde.shape == (1, 1)
    assert ws1.r_tilde[0, 0] == pytest.approx(float(z @ np.linalg.solve(filtered_cov, z)), rel=1e-8)


@pytest.mark.unit
def test_low_loglik_ignores_per_camera_affine_trends():
    """
    Story: Adding a different plane to each camera block, 100 times over,
    never moves the low-cloud value by more than 1e-8.
    """
    si = _random_super_image(3, 12, 21)
    store = InMemoryGeometryStore()
    base = low_cloud_loglik(si, P, store=store)
    rng = np.random.default_rng(22)
    for _ in range(100):
        trend = np.concatenate([
            design_matrix(si.coords[s]) @ rng.normal(0.0, 5.0, 3) for s in si.block_slices()
        ])
        assert abs(low_cloud_loglik(si.with_values(si.values + trend), P, store=store) - base) < 1e-8


@pytest.mark.unit
@pytest.mark.parametrize("c", [0.1, 10.0])
def test_low_loglik_global_scaling_shift(c):
    """
    Story: Scaling every value by c shifts the value by exactly
    -(m - 3) n log c, whatever the geometry.
    """
    n, m = 3, 12
    si = _random_super_image(n, m, 31)
    shift = low_cloud_loglik(si.with_values(c * si.values), P) - low_cloud_loglik(si, P)
    assert shift == pytest.approx(-(m - 3) * n * math.log(c), abs=1e-9)


@pytest.mark.unit
def test_no_newton_uses_per_patch_scales():
    si = _random_super_image(2, 8, 41)
    ws = build_low_workspace(si, P)
    assert low_cloud_loglik(si, P, newton=False) == pytest.approx(ws.loglik(ws.sigma_hat), rel=1e-12)
    assert np.all(ws.sigma_newton > 0)


@pytest.mark.unit
def test_flat_block_invalidates_low_candidate():
    coords = _grid(2, 3)
    shifted = _grid(2, 3, (0.5, 0.5))
    flat = Patch(shifted, 1.0 + shifted[:, 0])
    textured = Patch(coords, np.array([0.0, 1.0, -1.0, 2.0, 0.5, -0.3]))
    with pytest.raises(FlatPatchError, match="flat patch"):
        low_cloud_loglik(interlace([textured, flat]), P)


# ---------------------------------------------------------------------------
# High-cloud likelihood
# ---------------------------------------------------------------------------

@pytest.mark.unit
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_high_loglik_differences_match_quadrature(seed):
    """
    Story: For two cameras of 2x2 pixels and two candidate sub-pixel offsets,
    the difference of the closed-form marginal values equals the difference
    of log integrals over the scale computed by quadrature.
    """
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(8)
    first, second = (
        SuperImage(np.vstack([_grid(2, 2), _grid(2, 2, (frac, 0.1))]), values, (4, 4))
        for frac in (0.2, 0.45)
    )
    closed = high_cloud_loglik(first, P) - high_cloud_loglik(second, P)
    numeric = _marginal_log_integral(first) - _marginal_log_integral(second)
    assert closed == pytest.approx(numeric, abs=1e-6)


@pytest.mark.unit
def test_high_loglik_global_trend_and_scale():
    """
    Story: One plane added across the whole super-image changes nothing;
    scaling by c shifts the value by -(nm - 4) log c.
    """
    si = _random_super_image(3, 6, 51)
    base = high_cloud_loglik(si, P)
    trend = design_matrix(si.coords) @ np.array([2.0, -1.5, 0.7])
    assert high_cloud_loglik(si.with_values(si.values + trend), P) == pytest.approx(base, abs=1e-8)
    shift = high_cloud_loglik(si.with_values(10.0 * si.values), P) - base
    assert shift == pytest.approx(-(18 - 4) * math.log(10.0), abs=1e-9)


@pytest.mark.unit
def test_profile_minus_marginal_is_half_log_quadratic_form():
    si = _random_super_image(2, 6, 61)
    _, quad = high_cloud_terms(si, P)
    difference = high_cloud_profile_loglik(si, P) - high_cloud_loglik(si, P)
    assert difference == pytest.approx(-0.5 * math.log(quad), abs=1e-10)


@pytest.mark.unit
def test_high_loglik_rejects_flat_super_image():
    coords = np.vstack([_grid(2, 3), _grid(2, 3, (0.3, 0.0))])
    si = SuperImage(coords, 2.0 - coords[:, 1], (6, 6))
    with pytest.raises(FlatPatchError):
        high_cloud_loglik(si, P)


# ---------------------------------------------------------------------------
# Stabilization
# ---------------------------------------------------------------------------

@pytest.mark.unit
def test_stabilize_inverts_an_affine_copy():
    """
    Story: A camera that sees a*ref + b is mapped back by gain 1/a and offset
    -b/a; the reference and an identical copy get (1, 0).
    """
    rng = np.random.default_rng(5)
    ref = Raster(rng.standard_normal((20, 10)))
    scaled = ref.affine(2.0, 0.5)
    stab = stabilize([ref, ref, scaled], region=(2, 8))
    assert stab.gains[0] == 1.0 and stab.offsets[0] == 0.0
    assert stab.gains[1] == pytest.approx(1.0) and stab.offsets[1] == pytest.approx(0.0, abs=1e-12)
    assert stab.gains[2] == pytest.approx(0.5, rel=1e-12)
    assert stab.offsets[2] == pytest.approx(-0.25, abs=1e-12)
    np.testing.assert_allclose(stab.apply([ref, ref, scaled])[2].values, ref.values, atol=1e-12)


@pytest.mark.unit
def test_stabilize_rejects_untextured_region():
    ref = Raster(np.random.default_rng(6).standard_normal((5, 6)))
    flat = Raster(np.ones((5, 6)))
    with pytest.raises(UntexturedRegionError, match="untextured"):
        stabilize([ref, flat], region=(0, 6))


@pytest.mark.unit
def test_stabilization_map_validation_and_profiles():
    with pytest.raises(ValueError):
        StabilizationMap((1.0, -1.0), (0.0, 0.0))
    assert StabilizationMap.identity(3).gains == (1.0, 1.0, 1.0)
    means, variances = column_profiles([Raster(np.array([[1.0, 2.0], [3.0, 6.0]]))])
    np.testing.assert_allclose(means, [[2.0, 4.0]])
    np.testing.assert_allclose(variances, [[1.0, 4.0]])


# ---------------------------------------------------------------------------
# Correlation baseline
# ---------------------------------------------------------------------------

@pytest.mark.unit
def test_correlation_hand_values():
    """
    Story: (1,2,3,4) correlates perfectly with itself, -1 with its reverse,
    and 0 with (2,4,1,3): the centered products 0.75, -0.75, -0.75, 0.75
    cancel.
    """
    coords = _grid(2, 2)
    a = Patch(coords, np.array([1.0, 2.0, 3.0, 4.0]))
    assert correlation_metric(a, a) == pytest.approx(1.0)
    assert correlation_metric(a, Patch(coords, np.array([4.0, 3.0, 2.0, 1.0]))) == pytest.approx(-1.0)
    assert correlation_metric(a, Patch(coords, np.array([2.0, 4.0, 1.0, 3.0]))) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.unit
def test_correlation_rejects_constant_patch():
    coords = _grid(2, 2)
    with pytest.raises(FlatPatchError):
        correlation_metric(Patch(coords, np.ones(4)), Patch(coords, np.arange(4.0)))
