import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stlgcp.core import GridSpec, Raster
from stlgcp.covfit import (
    DEFAULT_CONTRAST_EXPONENT,
    ContrastError,
    CovarianceParams,
    DensityPairTable,
    fit_spatial_params,
    fit_theta,
    spatial_contrast,
    theoretical_K,
    theoretical_pcf,
    theoretical_temporal_cov,
)
from stlgcp.intensity import SpatialDensity, normalize_to_density, uniform_density
from stlgcp.summary import AutocovCurve, PcfCurve


def density_from(values, dx=1.0, dy=1.0):
    values = np.asarray(values, dtype=float)
    g = GridSpec(0.0, 0.0, dx, dy, *values.shape)
    return normalize_to_density(Raster(g, values))


class TestParams:
    def test_mean_and_ar(self):
        p = CovarianceParams(1.5, 2.0, 3.0)
        assert p.mean == -0.75
        assert p.ar_coefficient == pytest.approx(math.exp(-1 / 3))

    @pytest.mark.parametrize("args", [(-1.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, -2.0), (np.nan, 1.0, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            CovarianceParams(*args)


class TestTheoreticalPcf:
    def test_origin(self):
        assert theoretical_pcf(0.0, 2.0, 5.0) == pytest.approx(math.exp(2.0))

    def test_published_estimates_at_origin(self):
        assert theoretical_pcf(0.0, 4.933, 3494.705) == pytest.approx(math.exp(4.933), rel=1e-15)

    def test_limit(self):
        s2, phi = 4.933, 3494.705
        assert theoretical_pcf(100 * phi, s2, phi) - 1 < 1e-6 * math.exp(s2)

    def test_decreasing(self):
        u = np.linspace(0, 30, 200)
        assert np.all(np.diff(theoretical_pcf(u, 1.2, 4.0)) < 0)


class TestTheoreticalK:
    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (2.5, 0.3), (0.0, 4.0), (3.0, 0.0)])
    def test_poisson(self, a, b):
        assert theoretical_K(a, b, CovarianceParams(0.0, 1.0, 1.0)) == pytest.approx(2 * math.pi * a * a * b, abs=1e-15)

    def test_continuous_at_zero_variance(self):
        tiny = theoretical_K(1.3, 2.0, CovarianceParams(1e-12, 1.0, 1.0))
        assert tiny == pytest.approx(2 * math.pi * 1.3 ** 2 * 2.0, rel=1e-10)

    @pytest.mark.parametrize("a,b,s2,phi,theta,n_v", [(1.0, 1.0, 1.5, 0.5, 2.0, 1000), (3.0, 5.0, 0.4, 2.0, 0.7, 1000),
                                                      (0.5, 2.0, 4.933, 1.0, 0.182, 8000)])
    def test_riemann_oracle(self, a, b, s2, phi, theta, n_v):
        # the short temporal range needs a finer time axis for the oracle itself to reach 1e-6
        got = theoretical_K(a, b, CovarianceParams(s2, phi, theta))
        want = oracles.theoretical_K_riemann(a, b, s2, phi, theta, n_v=n_v)
        assert got == pytest.approx(want, rel=1e-6)

    def test_exceeds_poisson(self):
        assert theoretical_K(1.0, 1.0, CovarianceParams(0.3, 1.0, 1.0)) > 2 * math.pi

    @pytest.mark.parametrize("a,b", [(0.7, 1.1), (2.0, 0.4)])
    def test_mixed_derivative_is_pcf(self, a, b):
        # d^2 K / da db = 4 pi a g(a, b) with temporal lags on both sides
        p = CovarianceParams(1.1, 0.9, 1.7)
        h = 1e-3
        fd = (theoretical_K(a + h, b + h, p) - theoretical_K(a + h, b - h, p)
              - theoretical_K(a - h, b + h, p) + theoretical_K(a - h, b - h, p)) / (4 * h * h)
        g = math.exp(p.sigma2 * math.exp(-a / p.phi) * math.exp(-b / p.theta))
        assert fd == pytest.approx(4 * math.pi * a * g, rel=1e-5)

    def test_negative_lag(self):
        with pytest.raises(ValueError):
            theoretical_K(-1.0, 1.0, CovarianceParams(1.0, 1.0, 1.0))


class TestSpatialFit:
    def test_self_consistency(self):
        u = np.linspace(0.2, 20.0, 120)
        curve = PcfCurve(u, theoretical_pcf(u, 2.0, 5.0), 0.2)
        fit = fit_spatial_params(curve)
        assert fit.sigma2 == pytest.approx(2.0, rel=1e-4)
        assert fit.phi == pytest.approx(5.0, rel=1e-4)
        assert not fit.at_boundary and fit.exponent == DEFAULT_CONTRAST_EXPONENT

    def test_minimizer_beats_random_box_samples(self):
        rng = np.random.default_rng(0)
        u = np.linspace(0.1, 6.0, 60)
        g = theoretical_pcf(u, 1.3, 0.8) * np.exp(rng.normal(0, 0.05, len(u)))
        fit = fit_spatial_params(PcfCurve(u, g, 0.1))
        s2 = np.exp(rng.uniform(np.log(1e-3), np.log(20.0), 64))
        ph = np.exp(rng.uniform(np.log(0.1 / 20), np.log(300.0), 64))
        for a, b in zip(s2, ph):
            assert fit.contrast <= spatial_contrast(u, g, a, b) + 1e-15

    def test_boundary_flag(self):
        u = np.linspace(0.5, 5.0, 30)
        fit = fit_spatial_params(PcfCurve(u, theoretical_pcf(u, 2.0, 5.0), 0.5), bounds=((0.01, 1.0), (0.1, 100.0)))
        assert fit.at_boundary

    def test_non_finite_rejected(self):
        u = np.linspace(0.5, 5.0, 10)
        g = np.ones(10)
        g[3] = np.nan
        with pytest.raises(ContrastError):
            fit_spatial_params(PcfCurve(u, g, 0.5))

    def test_u_range_defaults_to_bandwidth(self):
        u = np.linspace(0.05, 5.0, 100)
        fit = fit_spatial_params(PcfCurve(u, theoretical_pcf(u, 1.0, 1.0), 0.3))
        assert fit.u_range[0] == 0.3


class TestTemporalCov:
    def test_zero_variance(self, grid10):
        dens = uniform_density(grid10)
        c = theoretical_temporal_cov(np.array([1.0, 2.0, 5.0]), CovarianceParams(0.0, 1.0, 1.0), dens,
                                     lambda t: np.full(np.shape(t), 100.0), 10.0)
        np.testing.assert_allclose(c, 0.0, atol=1e-9)

    def test_single_cell(self):
        dens = density_from([[3.0]], dx=2.0, dy=2.0)
        p = CovarianceParams(1.3, 0.7, 2.0)
        lam = lambda t: 5.0 + t  # noqa: E731
        got = theoretical_temporal_cov(2.0, p, dens, lam, 6.0)
        assert got == pytest.approx(11.0 * 9.0 * math.expm1(1.3 * math.exp(-1.0)), rel=1e-12)

    def test_four_cell_hand_expansion(self):
        vals = np.array([[1.0, 2.0], [3.0, 0.5]])
        dx, dy = 0.7, 1.3
        dens = density_from(vals, dx, dy)
        mass = (vals / vals.sum()).ravel()
        cells = [((i + 0.5) * dx, (j + 0.5) * dy) for i in range(2) for j in range(2)]
        p = CovarianceParams(0.9, 1.1, 0.6)
        got = theoretical_temporal_cov(1.5, p, dens, lambda t: np.sqrt(t), 4.0)
        want = oracles.temporal_cov_expanded(cells, mass, 0.9, 1.1, 0.6, 1.5, 2.0, math.sqrt(2.5))
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_unnormalised_rejected(self):
        g = GridSpec(0.0, 0.0, 1.0, 1.0, 2, 2)
        bad = SpatialDensity(Raster(g, np.ones((2, 2))), 1.0, 1.0, np.ones((2, 2)))
        with pytest.raises(ValueError, match="normalised"):
            DensityPairTable.from_density(bad)

    def test_non_positive_lag(self, grid10):
        with pytest.raises(ValueError):
            theoretical_temporal_cov(0.0, CovarianceParams(1.0, 1.0, 1.0), uniform_density(grid10),
                                     lambda t: 1.0, 3.0)


class TestThetaFit:
    def test_self_consistency(self):
        dens = density_from(np.arange(1.0, 17.0).reshape(4, 4), 0.5, 0.5)
        p = CovarianceParams(1.2, 0.8, 0.5)
        lam1 = np.full(60, 40.0)
        v = np.arange(1, 6)
        c = np.array([theoretical_temporal_cov(float(k), p, dens, lambda t: np.full(np.shape(t), 40.0), 30.0)
                      for k in v])
        fit = fit_theta(AutocovCurve(v, c, np.empty((0, 5))), 1.2, 0.8, dens, lam1)
        assert fit.theta == pytest.approx(0.5, abs=1e-3)

    def test_empty_range(self, grid10):
        a = AutocovCurve(np.arange(1, 4), np.ones(3), np.empty((0, 3)))
        with pytest.raises(ContrastError):
            fit_theta(a, 1.0, 1.0, uniform_density(grid10), np.ones(10), v_range=(5, 9))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_K_monotone_in_variance(s2, phi, theta, a, b):
    lo = theoretical_K(a, b, CovarianceParams(s2, phi, theta))
    hi = theoretical_K(a, b, CovarianceParams(s2 * 1.5, phi, theta))
    assert 2 * math.pi * a * a * b < lo < hi
