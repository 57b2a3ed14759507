"""Poisson patterns from intensity rasters and synthetic LGCP datasets."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import GridSpec, ObservationWindow, Raster, SpatioTemporalPointPattern
from .covfit import CovarianceParams
from .grf import CirculantSpectrum, circulant_eigenvalues, extend_grid
from .intensity import SpatialDensity


@dataclass(frozen=True)
class SimConfig:
    seed: int | None = None
    n_realizations: int = 1
    jitter: str = "uniform"

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.jitter != "uniform":
            raise ValueError(f"unknown jitter rule {self.jitter!r}")


MAX_REDRAWS = 1000


def _grid_window(grid: GridSpec) -> ObservationWindow:
    return ObservationWindow.rectangle(grid.x_min, grid.y_min, grid.x_max, grid.y_max)


def simulate_cells(mean_counts: np.ndarray, grid: GridSpec, rng: np.random.Generator,
                   window: ObservationWindow | None = None) -> np.ndarray:
    """Poisson count per cell from expected counts, placed uniformly inside the cell.

    With a polygon ``window`` a point landing outside it is redrawn inside the
    same cell, so every cell keeps its Poisson count and the expected total is
    the raster mass.
    """
    lam = np.where(grid.mask, np.nan_to_num(mean_counts), 0.0)
    if np.any(lam < 0):
        raise ValueError("intensity must be non-negative")
    n = rng.poisson(lam)
    ci, cj = np.nonzero(n)
    reps = n[ci, cj]
    ci, cj = np.repeat(ci, reps), np.repeat(cj, reps)
    u = rng.random((len(ci), 2))
    xy = np.column_stack([grid.x_min + (ci + u[:, 0]) * grid.dx,
                          grid.y_min + (cj + u[:, 1]) * grid.dy])
    if window is None or not len(xy) or window.is_rectangle:
        return xy
    out = ~window.contains(xy)
    for _ in range(MAX_REDRAWS):
        if not out.any():
            break
        k = np.flatnonzero(out)
        u = rng.random((len(k), 2))
        xy[k, 0] = grid.x_min + (ci[k] + u[:, 0]) * grid.dx
        xy[k, 1] = grid.y_min + (cj[k] + u[:, 1]) * grid.dy
        out[k] = ~window.contains(xy[k])
    # a sliver cell that keeps missing the window gives up its points
    return xy[~out]


def simulate_poisson_from_raster(raster: Raster, rng: np.random.Generator | None = None,
                                 window: ObservationWindow | None = None) -> np.ndarray:
    """Locations ``(n, 2)`` of one realisation.

    Each masked-in cell gets ``Poisson(value * dx * dy)`` points placed
    uniformly in the part of the cell inside ``window``.
    """
    rng = np.random.default_rng() if rng is None else rng
    vals = raster.filled()
    if np.any(vals < 0):
        raise ValueError("raster has negative cells")
    return simulate_cells(vals * raster.grid.cell_area, raster.grid, rng, window)


def simulate_from_field_draws(lambda0: SpatialDensity | np.ndarray, lambda1: float, draws: np.ndarray,
                              grid: GridSpec, rng: np.random.Generator | None = None,
                              window: ObservationWindow | None = None) -> np.ndarray:
    """Cox realisation: pick one base-lattice field draw at random, then
    simulate Poisson from ``lambda0 * lambda1 * exp(z)``."""
    rng = np.random.default_rng() if rng is None else rng
    draws = np.asarray(draws)
    z = draws[rng.integers(len(draws))].astype(float)
    lam0 = lambda0.raster.filled() if isinstance(lambda0, SpatialDensity) else np.nan_to_num(lambda0)
    return simulate_cells(lam0 * float(lambda1) * np.exp(z) * grid.cell_area, grid, rng, window)


def simulate_realizations(raster: Raster, config: SimConfig, window: ObservationWindow | None = None,
                          n_jobs: int = 1) -> list[np.ndarray]:
    """``config.n_realizations`` independent patterns with spawned RNG streams."""
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_realizations)

    def one(ss):
        return simulate_poisson_from_raster(raster, np.random.default_rng(ss), window)

    if n_jobs <= 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(n_jobs) as ex:
        return list(ex.map(one, seeds))


def simulate_latent_series(spectrum: CirculantSpectrum, n_slices: int, rng: np.random.Generator,
                           mean_offset: float | None = None) -> np.ndarray:
    """Stationary AR(1)-coupled fields ``(n_slices, M, N)`` on the extended lattice."""
    params = spectrum.params
    beta = params.ar_coefficient
    mu = params.mean if mean_offset is None else float(mean_offset)
    U = rng.standard_normal((n_slices,) + spectrum.ext.shape)
    gamma = np.empty_like(U)
    gamma[0] = U[0]
    s = np.sqrt(1.0 - beta * beta)
    for k in range(1, n_slices):
        gamma[k] = beta * gamma[k - 1] + s * U[k]
    return spectrum.apply_sqrt(gamma) + mu


@dataclass(frozen=True, eq=False)
class LgcpRealization:
    pattern: SpatioTemporalPointPattern
    fields: np.ndarray
    intensity: np.ndarray


def simulate_lgcp(params: CovarianceParams, lambda0: SpatialDensity | np.ndarray, lambda1_series,
                  grid: GridSpec, t_range, rng: np.random.Generator | None = None,
                  window: ObservationWindow | None = None,
                  spectrum: CirculantSpectrum | None = None) -> LgcpRealization:
    """Pattern plus the base-lattice fields ``z_t`` and intensities that generated it.

    ``lambda0`` is a density (per area, integrating to one); the expected
    count of day ``t`` is ``lambda1(t)`` when the field has mean ``-sigma2/2``.
    """
    rng = np.random.default_rng() if rng is None else rng
    T0, T1 = int(t_range[0]), int(t_range[1])
    days = np.arange(T0, T1 + 1)
    lam1 = np.broadcast_to(np.asarray(lambda1_series, dtype=float), days.shape)
    if np.any(lam1 <= 0):
        raise ValueError("lambda1 must be positive")
    lam0 = lambda0.raster.filled() if isinstance(lambda0, SpatialDensity) else np.nan_to_num(lambda0)
    window = _grid_window(grid) if window is None else window
    spectrum = circulant_eigenvalues(extend_grid(grid), params) if spectrum is None else spectrum
    z = spectrum.ext.restrict(simulate_latent_series(spectrum, len(days), rng))
    lam = lam0[None] * lam1[:, None, None] * np.exp(z)
    xy_all, t_all = [], []
    for k, d in enumerate(days):
        xy = simulate_cells(lam[k] * grid.cell_area, grid, rng, window)
        xy_all.append(xy)
        t_all.append(np.full(len(xy), d, dtype=np.int64))
    pattern = SpatioTemporalPointPattern(np.concatenate(xy_all) if xy_all else np.empty((0, 2)),
                                         np.concatenate(t_all), window, (T0, T1))
    return LgcpRealization(pattern, z, lam)


def simulate_lgcp_dataset(params, lambda0, lambda1_series, grid, t_range, rng=None, window=None):
    """Synthetic spatio-temporal LGCP pattern (see :func:`simulate_lgcp`)."""
    return simulate_lgcp(params, lambda0, lambda1_series, grid, t_range, rng, window).pattern
