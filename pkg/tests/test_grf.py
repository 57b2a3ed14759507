import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stlgcp.core import GridSpec
from stlgcp.covfit import CovarianceParams
from stlgcp.grf import (
    ExtendedGrid,
    NegativeEigenvalueError,
    base_row,
    circulant_eigenvalues,
    dense_extended_covariance,
    extend_grid,
    next_pow2,
    sample_grf,
    torus_distance,
)


def base(m, p, dx=1.0, dy=1.0):
    return GridSpec(0.0, 0.0, dx, dy, m, p)


class TestExtendGrid:
    @pytest.mark.parametrize("m,p,M,N", [(4, 4, 8, 8), (5, 3, 16, 8), (100, 60, 256, 128), (1, 1, 2, 2), (64, 33, 128, 128)])
    def test_sizes(self, m, p, M, N):
        assert extend_grid(base(m, p)).shape == (M, N)

    def test_next_pow2(self):
        assert [next_pow2(n) for n in (1, 2, 3, 8, 9)] == [1, 2, 4, 8, 16]

    @pytest.mark.parametrize("M,N", [(6, 8), (4, 8), (8, 12)])
    def test_invalid_extension(self, M, N):
        with pytest.raises(ValueError):
            ExtendedGrid(base(4, 4), M, N)

    def test_restrict_embed_round_trip(self, rng):
        ext = extend_grid(base(3, 5))
        v = rng.normal(size=(3, 5))
        np.testing.assert_array_equal(ext.restrict(ext.embed(v)), v)


class TestTorus:
    @pytest.mark.parametrize("c1,c2", [((0, 0), (7, 0)), ((1, 2), (6, 7)), ((3, 3), (3, 3)), ((0, 5), (4, 1))])
    def test_matches_nine_shift_oracle(self, c1, c2):
        ext = extend_grid(base(4, 4, 0.5, 1.5))
        assert torus_distance(c1, c2, ext) == pytest.approx(oracles.torus_distance_shifts(c1, c2, 8, 8, 0.5, 1.5),
                                                            abs=1e-14)

    def test_dense_matches_oracle(self):
        ext = extend_grid(base(4, 4, 0.3, 0.7))
        p = CovarianceParams(1.7, 0.9)
        np.testing.assert_allclose(dense_extended_covariance(ext, p),
                                   oracles.dense_torus_covariance(8, 8, 0.3, 0.7, 1.7, 0.9), atol=1e-14)

    def test_base_row_is_first_dense_row(self):
        ext = extend_grid(base(3, 2, 0.4, 0.4))
        p = CovarianceParams(2.0, 1.0)
        np.testing.assert_allclose(base_row(ext, p).ravel(), dense_extended_covariance(ext, p)[0], atol=1e-15)


class TestEigenvalues:
    @pytest.mark.parametrize("dx,dy,s2,phi", [(1.0, 1.0, 1.0, 1.0), (0.25, 0.5, 1.5, 0.2), (2.0, 1.0, 0.7, 5.0)])
    def test_match_dense_eigendecomposition(self, dx, dy, s2, phi):
        ext = extend_grid(base(4, 4, dx, dy))
        p = CovarianceParams(s2, phi)
        dense = np.linalg.eigvalsh(oracles.dense_torus_covariance(8, 8, dx, dy, s2, phi))
        spec = circulant_eigenvalues(ext, p, negative="clip")
        np.testing.assert_allclose(np.sort(np.fft.fft2(base_row(ext, p)).real.ravel()), dense, atol=1e-8)
        np.testing.assert_allclose(np.sort(spec.eigenvalues.ravel()), np.clip(dense, 0, None), atol=1e-8)

    def test_dc_only_for_constant_row(self):
        # phi huge: base row nearly constant, only the zero frequency survives
        ext = extend_grid(base(4, 4))
        spec = circulant_eigenvalues(ext, CovarianceParams(1.0, 1e12))
        assert spec.eigenvalues[0, 0] == pytest.approx(64.0, rel=1e-9)
        assert np.abs(spec.eigenvalues).ravel()[1:].max() < 1e-9

    def test_zero_variance(self):
        spec = circulant_eigenvalues(extend_grid(base(4, 4)), CovarianceParams(0.0, 1.0))
        assert np.all(spec.eigenvalues == 0) and not spec.negative_flag

    def test_apply_sqrt_squares_to_cov(self, rng):
        spec = circulant_eigenvalues(extend_grid(base(4, 4, 0.5, 0.5)), CovarianceParams(1.2, 0.8), negative="clip")
        g = rng.normal(size=(8, 8))
        np.testing.assert_allclose(spec.apply_sqrt(spec.apply_sqrt(g)), spec.apply_cov(g), atol=1e-12)

    def test_negative_policies(self):
        # a long-range field on a tight torus loses positive definiteness
        ext = extend_grid(base(4, 4))
        p = CovarianceParams(1.0, 50.0)
        spec = circulant_eigenvalues(ext, p, negative="clip")
        assert spec.negative_flag and spec.min_eigenvalue < 0 and spec.clipped_mass > 0
        assert np.all(spec.eigenvalues >= 0)
        for policy in ("raise", "auto"):
            with pytest.raises(NegativeEigenvalueError):
                circulant_eigenvalues(ext, p, negative=policy)

    def test_short_range_not_flagged(self):
        spec = circulant_eigenvalues(extend_grid(base(4, 4)), CovarianceParams(1.0, 2.0))
        assert not spec.negative_flag and spec.clipped_mass == 0


class TestSampling:
    def test_covariance_at_distance_classes(self):
        # 5000 draws, five lags along x; each estimate within 3 Monte-Carlo standard errors
        ext = extend_grid(base(16, 16, 0.25, 0.25))
        p = CovarianceParams(1.5, 1.0)
        spec = circulant_eigenvalues(ext, p, negative="clip")
        n = 5000
        z = sample_grf(spec, mean_offset=0.0, rng=np.random.default_rng(11), size=n).base
        for k in (0, 1, 2, 4, 8):
            est = np.mean(z[:, 4, 4] * z[:, 4 + k, 4])
            rho = np.exp(-0.25 * k / 1.0)
            se = 1.5 * np.sqrt(1 + rho * rho) / np.sqrt(n)
            assert abs(est - 1.5 * rho) < 3 * se, k

    def test_mean_offset_and_lognormal_mean(self):
        ext = extend_grid(base(8, 8, 0.5, 0.5))
        spec = circulant_eigenvalues(ext, CovarianceParams(1.0, 1.0), negative="clip")
        z = sample_grf(spec, rng=np.random.default_rng(2), size=4000).base
        assert abs(z.mean() + 0.5) < 0.05
        assert np.exp(z).mean() == pytest.approx(1.0, abs=0.05)

    def test_shapes_and_determinism(self):
        ext = extend_grid(base(5, 3))
        spec = circulant_eigenvalues(ext, CovarianceParams(1.0, 1.0), negative="clip")
        a = sample_grf(spec, rng=np.random.default_rng(0))
        b = sample_grf(spec, rng=np.random.default_rng(0))
        assert a.extended.shape == (16, 8) and a.base.shape == (5, 3)
        np.testing.assert_array_equal(a.extended, b.extended)

    def test_zero_variance_is_constant(self):
        spec = circulant_eigenvalues(extend_grid(base(4, 4)), CovarianceParams(0.0, 1.0))
        np.testing.assert_array_equal(sample_grf(spec, mean_offset=2.0, rng=np.random.default_rng(1)).base, 2.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0.1, 2.0), st.floats(0.1, 2.0), st.floats(0.05, 3.0))
def test_eigenvalues_real_and_sum_to_trace(m, p, dx, phi, s2):
    ext = extend_grid(base(m, p, dx, dx))
    spec = circulant_eigenvalues(ext, CovarianceParams(s2, phi), negative="clip")
    raw = np.fft.fft2(spec.base_row).real
    assert raw.sum() == pytest.approx(s2 * ext.M * ext.N, rel=1e-9)
    assert np.all(np.isfinite(spec.eigenvalues))
