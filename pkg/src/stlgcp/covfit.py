"""Covariance parameters of the latent field, their theoretical summaries and
minimum-contrast fitting against the empirical pair correlation and
temporal autocovariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, signal, special

from .intensity import SpatialDensity

DEFAULT_CONTRAST_EXPONENT = 0.25


class ContrastError(RuntimeError):
    pass


@dataclass(frozen=True)
class CovarianceParams:
    """Separable exponential covariance ``sigma2 * exp(-u/phi) * exp(-v/theta)``.

    ``sigma2 = 0`` is allowed and gives the Poisson special case.
    """

    sigma2: float
    phi: float
    theta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        if not (self.phi > 0 and self.theta > 0):
            raise ValueError("phi and theta must be positive")

    @property
    def mean(self) -> float:
        """Field mean making ``E[exp(Z)] = 1``."""
        return -0.5 * self.sigma2

    @property
    def ar_coefficient(self) -> float:
        """Correlation between consecutive days, ``exp(-1/theta)``."""
        return float(np.exp(-1.0 / self.theta))


def theoretical_pcf(u, sigma2: float, phi: float):
    """``exp(sigma2 * exp(-u/phi))``."""
    u = np.asarray(u, dtype=float)
    out = np.exp(sigma2 * np.exp(-u / phi))
    return out if out.ndim else float(out)


def _inner_time_integral(c, b, theta):
    """``int_0^b exp(c exp(-v/theta)) dv`` in closed form via the exponential integral."""
    c = np.asarray(c, dtype=float)
    small = c < 1e-8
    safe = np.where(small, 1.0, c)
    exact = theta * (special.expi(safe) - special.expi(safe * np.exp(-b / theta)))
    # series for tiny c: b + c*theta*(1 - e^{-b/theta})
    approx = b + c * theta * (1.0 - np.exp(-b / theta))
    return np.where(small, approx, exact)


def theoretical_K(a: float, b: float, params: CovarianceParams, epsrel: float = 1e-10) -> float:
    """``2 pi int_0^a u int_{-b}^b g(u, v) dv du`` for the separable exponential model.

    Temporal lags run over ``|v| <= b`` like in the estimator, so the Poisson
    case gives ``2 pi a^2 b``.
    """
    if a < 0 or b < 0:
        raise ValueError("lags must be non-negative")
    if params.sigma2 == 0 or a == 0 or b == 0:
        return 2.0 * np.pi * a * a * b
    s2, phi, theta = params.sigma2, params.phi, params.theta

    def f(u):
        return u * _inner_time_integral(s2 * np.exp(-u / phi), b, theta)

    val, err = integrate.quad(f, 0.0, a, epsabs=0.0, epsrel=epsrel, limit=200)
    if not np.isfinite(val) or err > max(1e-8 * abs(val), 1e-14):
        raise ContrastError(f"quadrature did not converge (estimated error {err:g})")
    return float(4.0 * np.pi * val)


# ---------------------------------------------------------------------------
# spatial fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialFit:
    sigma2: float
    phi: float
    contrast: float
    at_boundary: bool
    exponent: float
    u_range: tuple


def spatial_contrast(u, g_hat, sigma2, phi, exponent=DEFAULT_CONTRAST_EXPONENT, weights=None) -> float:
    diff = (np.asarray(g_hat) ** exponent - theoretical_pcf(u, sigma2, phi) ** exponent) ** 2
    if weights is not None:
        diff = diff * weights
    if len(u) == 1:
        return float(diff[0])
    return float(integrate.trapezoid(diff, u))


def _box_minimize(fun, lo, hi, n_grid=(24, 24), rng_seed=0):
    """Grid scan in log space followed by bounded Nelder-Mead, restarted once."""
    llo, lhi = np.log(lo), np.log(hi)
    axes = [np.linspace(a, b, k) for a, b, k in zip(llo, lhi, n_grid)]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(lo), -1).T
    vals = np.array([fun(np.exp(g)) for g in grid])
    if not np.any(np.isfinite(vals)):
        raise ContrastError("contrast is non-finite over the whole parameter box")
    start = grid[int(np.nanargmin(vals))]
    bounds = list(zip(llo, lhi))

    def obj(x):
        v = fun(np.exp(x))
        return v if np.isfinite(v) else 1e300

    opts = dict(xatol=1e-8, fatol=1e-14, maxiter=4000, maxfev=8000)
    best = optimize.minimize(obj, start, method="Nelder-Mead", bounds=bounds, options=opts)
    rng = np.random.default_rng(rng_seed)
    step = 0.05 * (lhi - llo)
    again = optimize.minimize(obj, np.clip(best.x + rng.normal(0, 1, len(lo)) * step, llo, lhi),
                              method="Nelder-Mead", bounds=bounds, options=opts)
    if again.fun < best.fun:
        best = again
    if not np.isfinite(best.fun) or best.fun >= 1e300:
        raise ContrastError("contrast is non-finite at the optimum")
    x = best.x
    at_edge = bool(np.any(np.abs(x - llo) < 1e-3) or np.any(np.abs(x - lhi) < 1e-3))
    return np.exp(x), float(best.fun), at_edge


def fit_spatial_params(pcf_curve, u_range=None, exponent: float = DEFAULT_CONTRAST_EXPONENT,
                       weights=None, bounds=None) -> SpatialFit:
    """Minimum-contrast ``(sigma2, phi)`` from a pair-correlation curve.

    Minimises ``int (g_hat^c - g^c)^2 du`` over ``u_range`` (trapezoid rule on
    the curve's lags).  ``u_range`` defaults to ``[h_s, max u]``.
    """
    u = np.asarray(pcf_curve.u_grid, dtype=float)
    g = np.asarray(pcf_curve.values, dtype=float)
    if u_range is None:
        h = getattr(pcf_curve, "h_s", 0.0) or 0.0
        u_range = (max(h, u.min()), u.max())
    sel = (u >= u_range[0]) & (u <= u_range[1])
    if sel.sum() < 2:
        raise ContrastError("fewer than two lags inside u_range")
    u, g = u[sel], g[sel]
    w = None if weights is None else np.asarray(weights, dtype=float)[sel]
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ContrastError("empirical pair correlation must be finite and non-negative on u_range")
    if bounds is None:
        bounds = ((1e-3, 20.0), (u.min() / 20.0, 50.0 * u.max()))
    lo = np.array([bounds[0][0], bounds[1][0]], dtype=float)
    hi = np.array([bounds[0][1], bounds[1][1]], dtype=float)
    x, c, edge = _box_minimize(lambda p: spatial_contrast(u, g, p[0], p[1], exponent, w), lo, hi)
    return SpatialFit(float(x[0]), float(x[1]), c, edge, exponent, (float(u_range[0]), float(u_range[1])))


# ---------------------------------------------------------------------------
# temporal covariance
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityPairTable:
    """Autocorrelation of the cell masses ``a = lambda0 * dA`` by cell offset.

    ``sum_{c1,c2} a(c1) a(c2) f(|c1 - c2|) = sum_o weight[o] * f(dist[o])``.
    """

    dist: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_density(cls, density: SpatialDensity, tol: float = 1e-6) -> "DensityPairTable":
        g = density.grid
        a = density.raster.filled() * g.cell_area
        if abs(a.sum() - 1.0) > tol:
            raise ValueError(f"density raster is not normalised (mass {a.sum():.6g})")
        ac = signal.fftconvolve(a, a[::-1, ::-1], mode="full")
        oi = (np.arange(2 * g.m - 1) - (g.m - 1)) * g.dx
        oj = (np.arange(2 * g.p - 1) - (g.p - 1)) * g.dy
        dist = np.hypot(oi[:, None], oj[None, :])
        keep = np.abs(ac) > 1e-300
        return cls(dist[keep], ac[keep])

    def excess(self, sigma2: float, phi: float, rho) -> np.ndarray:
        """``sum a a' (exp(sigma2 r_phi(d) rho) - 1)`` for each temporal correlation ``rho``."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        base = sigma2 * np.exp(-self.dist / phi)
        return np.expm1(base[None, :] * rho[:, None]) @ self.weight


def theoretical_temporal_cov(v, params: CovarianceParams, lambda0: SpatialDensity | DensityPairTable,
                             lambda1_at, t) -> float:
    """Covariance of the window totals on days ``t`` and ``t - v`` (``v > 0``)."""
    if np.any(np.asarray(v) <= 0):
        raise ValueError("temporal lag must be positive")
    table = lambda0 if isinstance(lambda0, DensityPairTable) else DensityPairTable.from_density(lambda0)
    rho = np.exp(-np.asarray(v, dtype=float) / params.theta)
    ex = table.excess(params.sigma2, params.phi, rho)
    lam = lambda1_at(np.asarray(t, dtype=float)) * lambda1_at(np.asarray(t, dtype=float) - v)
    out = lam * ex.reshape(np.shape(rho))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class TemporalFit:
    theta: float
    contrast: float
    at_boundary: bool
    v_range: tuple


def mean_lambda_products(lambda1_values, v_grid) -> np.ndarray:
    """``mean_t lambda1(t) lambda1(t - v)`` for each lag."""
    lam = np.asarray(lambda1_values, dtype=float)
    return np.array([np.mean(lam[v:] * lam[:-v]) for v in np.asarray(v_grid, dtype=int)])


def temporal_contrast(theta, v, c_bar, sigma2, phi, table: DensityPairTable, lam_prod) -> float:
    model = lam_prod * table.excess(sigma2, phi, np.exp(-v / theta))
    return float(np.sum((c_bar - model) ** 2))


def fit_theta(autocov, sigma2: float, phi: float, lambda0, lambda1_values, v_range=None,
              bounds=(1e-2, 1e2)) -> TemporalFit:
    """Minimum-contrast ``theta`` with ``sigma2`` and ``phi`` held fixed."""
    table = lambda0 if isinstance(lambda0, DensityPairTable) else DensityPairTable.from_density(lambda0)
    v = np.asarray(autocov.v_grid, dtype=float)
    c = np.asarray(autocov.values, dtype=float)
    if v_range is not None:
        sel = (v >= v_range[0]) & (v <= v_range[1])
        v, c = v[sel], c[sel]
    if len(v) == 0:
        raise ContrastError("no lags inside v_range")
    lam_prod = mean_lambda_products(lambda1_values, v.astype(int))
    obj = lambda lt: temporal_contrast(np.exp(lt), v, c, sigma2, phi, table, lam_prod)  # noqa: E731
    llo, lhi = np.log(bounds[0]), np.log(bounds[1])
    grid = np.linspace(llo, lhi, 121)
    vals = np.array([obj(g) for g in grid])
    if not np.any(np.isfinite(vals)):
        raise ContrastError("temporal contrast is non-finite over the whole box")
    k = int(np.nanargmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(obj, bounds=(a, b), method="bounded", options=dict(xatol=1e-10))
    x, f = (res.x, res.fun) if res.fun <= vals[k] else (grid[k], vals[k])
    edge = bool(abs(x - llo) < 1e-3 or abs(x - lhi) < 1e-3)
    return TemporalFit(float(np.exp(x)), float(f), edge, (float(v.min()), float(v.max())))
