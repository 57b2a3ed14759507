"""Quartic-kernel spatial intensity, density normalisation and a temporal
Epanechnikov intensity used as plug-in for the second-order summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GridSpec, PatternError, Raster, SpatioTemporalPointPattern

SQRT2 = np.sqrt(2.0)


class BandwidthError(ValueError):
    pass


def quartic_kernel(u):
    """``(1 - u^2/2)^2`` on ``|u| <= sqrt(2)``, zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.clip(1.0 - 0.5 * u * u, 0.0, None) ** 2
    return out if out.ndim else float(out)


def _points(pattern_or_xy) -> np.ndarray:
    if isinstance(pattern_or_xy, SpatioTemporalPointPattern):
        return pattern_or_xy.xy
    return np.asarray(pattern_or_xy, dtype=float).reshape(-1, 2)


def kernel_sum_grid(xy: np.ndarray, grid: GridSpec, h: float) -> np.ndarray:
    """``(1/h) sum_i kappa(||c - s_i|| / h)`` at every centroid ``c`` (no masking).

    Works on a stencil of cell offsets so the cost is
    ``n_events * cells_within(sqrt(2) h)``.
    """
    out = np.zeros(grid.m * grid.p)
    if len(xy) == 0:
        return out.reshape(grid.shape)
    reach = SQRT2 * h
    # cell of every event (clipped: events may sit outside the lattice)
    ei = np.floor((xy[:, 0] - grid.x_min) / grid.dx).astype(np.int64)
    ej = np.floor((xy[:, 1] - grid.y_min) / grid.dy).astype(np.int64)
    ri = int(np.ceil(reach / grid.dx)) + 1
    rj = int(np.ceil(reach / grid.dy)) + 1
    ri, rj = min(ri, grid.m + 1), min(rj, grid.p + 1)
    x, y = xy[:, 0], xy[:, 1]
    for di in range(-ri, ri + 1):
        ci = ei + di
        okx = (ci >= 0) & (ci < grid.m)
        if not okx.any():
            continue
        cx = grid.x_min + (ci + 0.5) * grid.dx
        ddx = cx - x
        for dj in range(-rj, rj + 1):
            cj = ej + dj
            ok = okx & (cj >= 0) & (cj < grid.p)
            if not ok.any():
                continue
            cy = grid.y_min + (cj + 0.5) * grid.dy
            r2 = ddx * ddx + (cy - y) ** 2
            ok &= r2 <= 2.0 * h * h
            if not ok.any():
                continue
            w = np.clip(1.0 - 0.5 * r2[ok] / (h * h), 0.0, None) ** 2
            out += np.bincount(ci[ok] * grid.p + cj[ok], weights=w, minlength=out.size)
    return out.reshape(grid.shape) / h


def kernel_intensity_raster(pattern, grid: GridSpec, h: float) -> Raster:
    """Quartic-kernel intensity at cell centroids, without edge correction."""
    if not h > 0:
        raise BandwidthError(f"bandwidth must be positive, got {h}")
    return Raster(grid, kernel_sum_grid(_points(pattern), grid, float(h)), units="intensity")


@dataclass(frozen=True, eq=False)
class SpatialDensity:
    """Spatial intensity rescaled to integrate to one over the masked cells.

    ``full`` keeps the rescaled values on every cell (masked-out ones too) so
    events in boundary cells whose centroid falls outside a polygon window
    still get a positive lookup.
    """

    raster: Raster
    bandwidth: float
    normalization: float
    full: np.ndarray

    @property
    def grid(self) -> GridSpec:
        return self.raster.grid

    @property
    def values(self) -> np.ndarray:
        return self.raster.values

    def at(self, xy) -> np.ndarray:
        i, j = self.grid.cell_index(xy)
        return self.full[i, j]

    def mass(self) -> float:
        return self.raster.integral()


def normalize_to_density(raster: Raster, grid: GridSpec | None = None,
                         bandwidth: float = float("nan"),
                         full: np.ndarray | None = None) -> SpatialDensity:
    """Divide by the Riemann mass over masked-in cells."""
    grid = raster.grid if grid is None else grid
    mass = float(np.sum(raster.filled()) * grid.cell_area)
    if not mass > 0:
        raise PatternError("raster has no mass on masked-in cells")
    base = raster.filled() if full is None else np.asarray(full, dtype=float)
    return SpatialDensity(Raster(grid, raster.filled() / mass, units="density"),
                          bandwidth, mass, base / mass)


def spatial_density(pattern, grid: GridSpec, h: float) -> SpatialDensity:
    """Kernel estimate followed by normalisation."""
    if not h > 0:
        raise BandwidthError(f"bandwidth must be positive, got {h}")
    full = kernel_sum_grid(_points(pattern), grid, float(h))
    return normalize_to_density(Raster(grid, full), bandwidth=float(h), full=full)


def uniform_density(grid: GridSpec) -> SpatialDensity:
    """Constant density over the masked-in cells."""
    ones = np.ones(grid.shape)
    return normalize_to_density(Raster(grid, ones), full=ones)


def epanechnikov_temporal_intensity(times, h_t: float, t):
    """``(1/h_t) sum_i 0.75 (1 - ((t - t_i)/h_t)^2)_+`` evaluated at ``t``.

    Duplicate stamps are collapsed first, so integer-day data costs
    ``O(#distinct days * len(t))``.
    """
    if not h_t > 0:
        raise BandwidthError(f"temporal bandwidth must be positive, got {h_t}")
    uniq, cnt = np.unique(np.asarray(times, dtype=float), return_counts=True)
    tt = np.asarray(t, dtype=float)
    u = (tt.reshape(-1, 1) - uniq[None, :]) / h_t
    k = np.clip(1.0 - u * u, 0.0, None) * 0.75
    out = (k @ cnt) / h_t
    return out.reshape(tt.shape) if tt.ndim else float(out[0])
