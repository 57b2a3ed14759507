"""Stationary Gaussian fields on a torus-wrapped extended lattice.

The base lattice (``m x p``) is embedded in an ``M x N`` lattice with
``M, N`` powers of two at least twice as large.  Distances wrap around the
torus so the covariance matrix is block circulant and diagonalised by the 2-D
DFT: its eigenvalues are ``fft2`` of the first row, and
``ifft2(fft2(U) * sqrt(eig))`` maps white noise ``U`` to a correlated field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GridSpec
from .covfit import CovarianceParams

NEG_FLAG_REL = 1e-8
NEG_CLIP_TRACE_REL = 1e-6


class NegativeEigenvalueError(ArithmeticError):
    pass


class FieldNumericsError(ArithmeticError):
    pass


def next_pow2(n: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(n, 1)))))


@dataclass(frozen=True, eq=False)
class ExtendedGrid:
    base: GridSpec
    M: int
    N: int

    def __post_init__(self):
        for k, b in ((self.M, self.base.m), (self.N, self.base.p)):
            if k & (k - 1) or k < 2 * b:
                raise ValueError(f"extended size {k} must be a power of two >= {2 * b}")

    @property
    def Rx(self) -> float:
        return self.M * self.base.dx

    @property
    def Ry(self) -> float:
        return self.N * self.base.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M, self.N)

    def restrict(self, field: np.ndarray) -> np.ndarray:
        """Base-lattice block of an extended field (last two axes)."""
        return field[..., : self.base.m, : self.base.p]

    def embed(self, base_values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Place base-lattice values into the corner of an extended array."""
        base_values = np.asarray(base_values)
        out = np.full(base_values.shape[:-2] + self.shape, fill, dtype=float)
        out[..., : self.base.m, : self.base.p] = base_values
        return out


def extend_grid(base: GridSpec) -> ExtendedGrid:
    """Smallest power-of-two extension with ``M >= 2m`` and ``N >= 2p``."""
    return ExtendedGrid(base, next_pow2(2 * base.m), next_pow2(2 * base.p))


def torus_distance(cell1, cell2, ext: ExtendedGrid):
    """Shortest distance between cell centroids on the wrapped extended lattice."""
    i1, j1 = np.asarray(cell1, dtype=float).T
    i2, j2 = np.asarray(cell2, dtype=float).T
    du = np.abs(i1 - i2) * ext.base.dx
    dv = np.abs(j1 - j2) * ext.base.dy
    du = np.minimum(du, ext.Rx - du)
    dv = np.minimum(dv, ext.Ry - dv)
    out = np.sqrt(du * du + dv * dv)
    return out if np.ndim(out) else float(out)


def base_row(ext: ExtendedGrid, params: CovarianceParams) -> np.ndarray:
    """Covariance between cell (0, 0) and every cell, as an ``M x N`` array."""
    ii, jj = np.meshgrid(np.arange(ext.M), np.arange(ext.N), indexing="ij")
    cells = np.column_stack([ii.ravel(), jj.ravel()])
    d = torus_distance(np.zeros_like(cells), cells, ext)
    return params.sigma2 * np.exp(-np.asarray(d).reshape(ext.shape) / params.phi)


def dense_extended_covariance(ext: ExtendedGrid, params: CovarianceParams) -> np.ndarray:
    """Full ``MN x MN`` covariance in lexicographic order (small grids only)."""
    ii, jj = np.meshgrid(np.arange(ext.M), np.arange(ext.N), indexing="ij")
    cells = np.column_stack([ii.ravel(), jj.ravel()])
    q = len(cells)
    a = np.repeat(cells, q, axis=0)
    b = np.tile(cells, (q, 1))
    d = np.asarray(torus_distance(a, b, ext)).reshape(q, q)
    return params.sigma2 * np.exp(-d / params.phi)


@dataclass(frozen=True, eq=False)
class CirculantSpectrum:
    """Eigenvalues of the block-circulant covariance and what produced them."""

    ext: ExtendedGrid
    params: CovarianceParams
    eigenvalues: np.ndarray
    base_row: np.ndarray
    min_eigenvalue: float
    negative_flag: bool
    clipped_mass: float

    @property
    def sqrt_eigenvalues(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    def apply_sqrt(self, g: np.ndarray) -> np.ndarray:
        """``A g`` for the symmetric square root ``A`` (batched over leading axes)."""
        return np.fft.ifft2(np.fft.fft2(g, axes=(-2, -1)) * self.sqrt_eigenvalues, axes=(-2, -1)).real

    def apply_cov(self, g: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(np.fft.fft2(g, axes=(-2, -1)) * self.eigenvalues, axes=(-2, -1)).real


def circulant_eigenvalues(ext: ExtendedGrid, params: CovarianceParams,
                          negative: str = "auto") -> CirculantSpectrum:
    """Eigenvalues via the 2-D FFT of the base row.

    Eigenvalues below ``-1e-8 * max`` raise the negative flag.  ``negative``
    chooses the response: ``"clip"`` zeroes them, ``"raise"`` aborts and
    ``"auto"`` clips only when their mass is below ``1e-6`` of the trace.
    """
    row = base_row(ext, params)
    spec = np.fft.fft2(row)
    scale = max(float(np.max(np.abs(spec.real))), 1e-300)
    if np.max(np.abs(spec.imag)) > 1e-8 * scale and params.sigma2 > 0:
        raise FieldNumericsError("base row is not symmetric: spectrum has imaginary part")
    eig = spec.real
    lo = float(eig.min())
    flag = lo < -NEG_FLAG_REL * scale
    neg_mass = float(-eig[eig < 0].sum())
    trace = float(eig.sum())
    if flag:
        if negative == "raise" or (negative == "auto" and neg_mass >= NEG_CLIP_TRACE_REL * abs(trace)):
            raise NegativeEigenvalueError(
                f"circulant embedding is not positive semidefinite (min eigenvalue {lo:g}, "
                f"negative mass {neg_mass:g}); enlarge the extension or clip explicitly")
    clipped = np.clip(eig, 0.0, None)
    return CirculantSpectrum(ext, params, clipped, row, lo, bool(flag), neg_mass)


@dataclass(frozen=True, eq=False)
class FieldSample:
    extended: np.ndarray
    base: np.ndarray


def sample_grf(spectrum: CirculantSpectrum, mean_offset: float | None = None,
               rng: np.random.Generator | None = None, size: int | None = None) -> FieldSample:
    """Draw ``A U + mean`` with ``U`` standard normal on the extended lattice.

    ``mean_offset`` defaults to ``-sigma2/2``.  With ``size`` the draws are
    stacked along a leading axis.
    """
    rng = np.random.default_rng() if rng is None else rng
    mu = spectrum.params.mean if mean_offset is None else float(mean_offset)
    shape = spectrum.ext.shape if size is None else (size,) + spectrum.ext.shape
    U = rng.standard_normal(shape)
    raw = np.fft.ifft2(np.fft.fft2(U, axes=(-2, -1)) * spectrum.sqrt_eigenvalues, axes=(-2, -1))
    scale = max(float(np.max(np.abs(raw.real))), 1.0)
    if np.max(np.abs(raw.imag)) > 1e-10 * scale:
        raise FieldNumericsError("sampled field has a non-negligible imaginary part")
    z = raw.real + mu
    if not np.all(np.isfinite(z)):
        raise FieldNumericsError("sampled field contains non-finite values")
    return FieldSample(z, spectrum.ext.restrict(z))
