"""Conditional simulation of the latent field by whitened MALA and
Ornstein-Uhlenbeck forecasting.

The field on slice ``t`` of the window ``nu..T`` is ``z_t = A gamma_t + mu`` on
the extended lattice, ``A`` the symmetric circulant square root.  The prior on
``gamma`` is a unit-spacing AR(1) chain with ``beta = exp(-1/theta)`` and
innovation variance ``1 - beta^2`` so every ``gamma_t`` is marginally N(0, I).
Counts live on the masked-in base cells only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CellCountSeries, GridSpec, Raster
from .covfit import CovarianceParams
from .grf import CirculantSpectrum, circulant_eigenvalues, extend_grid
from .intensity import SpatialDensity

DEFAULT_TARGET_ACCEPT = 0.574
DEFAULT_WINDOW = 7
DEFAULT_BURN_FRACTION = 0.2
DEFAULT_THIN = 10


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LatentProblem:
    """Everything the target density needs, precomputed.

    ``counts`` is ``(zeta, m, p)`` and ``base`` holds ``lambda0 * lambda1(t) *
    cell_area`` on masked-in cells (zero elsewhere).
    """

    spectrum: CirculantSpectrum
    counts: np.ndarray
    base: np.ndarray
    mask: np.ndarray
    days: np.ndarray

    @property
    def params(self) -> CovarianceParams:
        return self.spectrum.params

    @property
    def mu(self) -> float:
        return self.params.mean

    @property
    def beta(self) -> float:
        return self.params.ar_coefficient

    @property
    def zeta(self) -> int:
        return self.counts.shape[0]

    @property
    def state_shape(self) -> tuple:
        return (self.zeta,) + self.spectrum.ext.shape

    def z(self, gamma: np.ndarray) -> np.ndarray:
        """Extended-lattice field for every slice."""
        return self.spectrum.apply_sqrt(gamma) + self.mu

    def z_base(self, gamma: np.ndarray) -> np.ndarray:
        return self.spectrum.ext.restrict(self.z(gamma))


def build_problem(counts, params: CovarianceParams, lambda0, lambda1,
                  spectrum: CirculantSpectrum | None = None, days=None) -> LatentProblem:
    """Assemble a :class:`LatentProblem`.

    ``counts`` is a :class:`CellCountSeries` (all its days are used unless
    ``days`` picks a subset) or a ``(zeta, m, p)`` array.  ``lambda0`` is a
    :class:`SpatialDensity` or an ``(m, p)`` array of per-area values;
    ``lambda1`` has one value per slice.
    """
    if isinstance(counts, CellCountSeries):
        grid = counts.grid
        sel = counts.days if days is None else np.asarray(days)
        x = np.stack([counts[d] for d in sel]).astype(float)
        days = np.asarray(sel)
    else:
        x = np.asarray(counts, dtype=float)
        if x.ndim == 2:
            x = x[None]
        grid = lambda0.grid if isinstance(lambda0, SpatialDensity) else None
        days = np.arange(len(x)) if days is None else np.asarray(days)
    if spectrum is None:
        if grid is None:
            raise ValueError("need a grid: pass a CellCountSeries, a SpatialDensity or a spectrum")
        spectrum = circulant_eigenvalues(extend_grid(grid), params)
    grid = spectrum.ext.base
    if x.shape[1:] != grid.shape:
        raise ValueError(f"counts have shape {x.shape[1:]}, grid is {grid.shape}")
    if np.any(x < 0):
        raise ValueError("counts must be non-negative")
    lam0 = lambda0.raster.filled() if isinstance(lambda0, SpatialDensity) else np.asarray(lambda0, dtype=float)
    if lam0.shape != grid.shape:
        raise ValueError(f"lambda0 has shape {lam0.shape}, grid is {grid.shape}")
    lam1 = np.broadcast_to(np.asarray(lambda1, dtype=float), (len(x),))
    if np.any(lam1 < 0) or np.any(lam0 < 0):
        raise ValueError("intensities must be non-negative")
    mask = grid.mask.astype(bool)
    base = np.where(mask, np.nan_to_num(lam0), 0.0)[None] * lam1[:, None, None] * grid.cell_area
    x = np.where(mask[None], x, 0.0)
    return LatentProblem(spectrum, x, base, mask, days)


def _check(gamma, problem: LatentProblem) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != problem.state_shape:
        raise ValueError(f"state has shape {gamma.shape}, expected {problem.state_shape}")
    return gamma


def _prior_terms(gamma, beta):
    innov = gamma[1:] - beta * gamma[:-1]
    return innov, 1.0 - beta * beta


def log_target(gamma, problem: LatentProblem) -> float:
    """Log posterior of the whitened state up to an additive constant.

    ``sum x z - b exp(z)`` over masked cells (``log x!`` and ``x log b`` are
    dropped) plus the AR(1) Gaussian prior.
    """
    gamma = _check(gamma, problem)
    zb = problem.z_base(gamma)
    lik = float(np.sum(problem.counts * zb - problem.base * np.exp(zb)))
    innov, s2 = _prior_terms(gamma, problem.beta)
    prior = -0.5 * float(np.sum(gamma[0] ** 2))
    if len(innov):
        prior -= 0.5 * float(np.sum(innov ** 2)) / s2
    return lik + prior


def grad_log_target(gamma, problem: LatentProblem) -> np.ndarray:
    gamma = _check(gamma, problem)
    return _value_and_grad(gamma, problem)[1]


def _value_and_grad(gamma, problem: LatentProblem):
    zb = problem.z_base(gamma)
    ez = problem.base * np.exp(zb)
    lik = float(np.sum(problem.counts * zb - ez))
    resid = problem.spectrum.ext.embed(problem.counts - ez)
    g = problem.spectrum.apply_sqrt(resid)  # A is symmetric so A^T = A
    beta = problem.beta
    innov, s2 = _prior_terms(gamma, beta)
    prior = -0.5 * float(np.sum(gamma[0] ** 2))
    g[0] -= gamma[0]
    if len(innov):
        prior -= 0.5 * float(np.sum(innov ** 2)) / s2
        g[1:] -= innov / s2
        g[:-1] += beta * innov / s2
    return lik + prior, g


@dataclass
class _Point:
    gamma: np.ndarray
    logp: float
    grad: np.ndarray


def _point(gamma, problem) -> _Point:
    lp, g = _value_and_grad(gamma, problem)
    return _Point(gamma, lp, g)


def _log_q(to, frm: _Point, xi2):
    d = to - frm.gamma - 0.5 * xi2 * frm.grad
    return -0.5 * float(np.sum(d * d)) / xi2


def mala_step(current, xi2: float, rng: np.random.Generator, problem: LatentProblem):
    """One MALA transition.  Returns ``(point, accepted, alpha, finite)``.

    ``current`` may be a state array or the cached point from the previous
    step.  A non-finite target at the proposal is rejected.
    """
    if not xi2 > 0:
        raise ValueError("xi^2 must be positive")
    cur = current if isinstance(current, _Point) else _point(_check(current, problem), problem)
    noise = rng.standard_normal(cur.gamma.shape)
    u = rng.random()
    prop_g = cur.gamma + 0.5 * xi2 * cur.grad + np.sqrt(xi2) * noise
    with np.errstate(over="ignore", invalid="ignore"):
        prop = _point(prop_g, problem)
    if not (np.isfinite(prop.logp) and np.all(np.isfinite(prop.grad))):
        return cur, False, 0.0, False
    log_ratio = prop.logp + _log_q(cur.gamma, prop, xi2) - cur.logp - _log_q(prop_g, cur, xi2)
    alpha = 1.0 if log_ratio >= 0 else float(np.exp(log_ratio))
    if u < alpha:
        return prop, True, alpha, True
    return cur, False, alpha, True


@dataclass(frozen=True, eq=False)
class MalaRun:
    """Thinned post-burn-in samples of the whitened state and chain diagnostics."""

    problem: LatentProblem
    samples: np.ndarray
    acceptance_rate: float
    xi2: float
    burn_in: int
    n_iter: int
    thin: int
    trace_logp: np.ndarray = field(repr=False)
    trace_alpha: np.ndarray = field(repr=False)
    trace_xi2: np.ndarray = field(repr=False)
    n_nonfinite: int = 0

    @property
    def params(self) -> CovarianceParams:
        return self.problem.params

    @property
    def spectrum(self) -> CirculantSpectrum:
        return self.problem.spectrum

    def z_samples(self, slice_index: int = -1) -> np.ndarray:
        """Extended-lattice field samples for one slice, ``(n_samples, M, N)``."""
        return self.problem.spectrum.apply_sqrt(self.samples[:, slice_index]) + self.problem.mu

    def posterior_mean_z(self) -> np.ndarray:
        """Posterior mean of ``z`` on the extended lattice for every slice."""
        return self.problem.z(self.samples.mean(axis=0))

    def terminal(self) -> "TerminalSlice":
        """Field samples of the last slice, all the forecast needs."""
        return TerminalSlice(self.problem.spectrum, self.z_samples(-1))

    def diagnostics_rows(self):
        for k in range(self.n_iter):
            yield k + 1, float(self.trace_logp[k]), float(self.trace_alpha[k]), float(self.trace_xi2[k])


def run_mala(problem: LatentProblem, n_iter: int, burn_in: int | None = None,
             target_accept: float = DEFAULT_TARGET_ACCEPT, seed=None, thin: int = DEFAULT_THIN,
             xi2_init: float | None = None, adapt: bool = True, init=None) -> MalaRun:
    """Run one chain.

    During burn-in ``log xi^2`` follows a Robbins-Monro recursion towards
    ``target_accept`` with gain ``(k + 1)^-0.6``; it is frozen afterwards.
    """
    n_iter = int(n_iter)
    burn_in = int(DEFAULT_BURN_FRACTION * n_iter) if burn_in is None else int(burn_in)
    if not 0 <= burn_in < n_iter:
        raise ValueError("need 0 <= burn_in < n_iter")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = np.random.default_rng(seed)
    d = int(np.prod(problem.state_shape))
    log_xi2 = np.log(xi2_init if xi2_init is not None else 1.65 ** 2 / d ** (1.0 / 3.0))
    gamma0 = np.zeros(problem.state_shape) if init is None else _check(init, problem).copy()
    cur = _point(gamma0, problem)
    if not np.isfinite(cur.logp):
        raise ValueError("initial state has non-finite log target")
    trace_logp = np.empty(n_iter)
    trace_alpha = np.empty(n_iter)
    trace_xi2 = np.empty(n_iter)
    kept = []
    n_acc = n_bad = 0
    for k in range(n_iter):
        xi2 = float(np.exp(log_xi2))
        cur, acc, alpha, finite = mala_step(cur, xi2, rng, problem)
        n_bad += not finite
        trace_logp[k], trace_alpha[k], trace_xi2[k] = cur.logp, alpha, xi2
        if k < burn_in:
            if adapt:
                log_xi2 += (k + 1.0) ** -0.6 * (alpha - target_accept)
        else:
            n_acc += acc
            if (k - burn_in + 1) % thin == 0:
                kept.append(cur.gamma.copy())
    n_post = n_iter - burn_in
    rate = n_acc / n_post
    if n_acc == 0:
        raise TuningError(f"no proposal accepted after adaptation (xi^2 = {np.exp(log_xi2):g})")
    samples = np.stack(kept) if kept else np.empty((0,) + problem.state_shape)
    return MalaRun(problem, samples, float(rate), float(np.exp(log_xi2)), burn_in, n_iter, thin,
                   trace_logp, trace_alpha, trace_xi2, n_bad)


# ---------------------------------------------------------------------------
# forecasting
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TerminalSlice:
    """Posterior field samples ``z_T`` on the extended lattice."""

    spectrum: CirculantSpectrum
    samples: np.ndarray

    @property
    def params(self) -> CovarianceParams:
        return self.spectrum.params

    def z_samples(self, slice_index: int = -1) -> np.ndarray:
        return self.samples


def _terminal(run) -> TerminalSlice:
    return run.terminal() if isinstance(run, MalaRun) else run


def forecast_weight(delta: float, theta: float) -> float:
    """``exp(-delta/theta)``, the weight the forecast keeps on the last slice."""
    return float(np.exp(-float(delta) / float(theta)))


def forecast_mean(run: MalaRun, delta: float, params: CovarianceParams | None = None) -> np.ndarray:
    """``phi E[z_T | x] + (1 - phi) mu`` on the extended lattice."""
    run = _terminal(run)
    params = run.params if params is None else params
    if delta < 0:
        raise ValueError("delta must be non-negative")
    w = forecast_weight(delta, params.theta)
    return w * run.z_samples(-1).mean(axis=0) + (1.0 - w) * params.mean


def forecast_variance(run: MalaRun, delta: float, params: CovarianceParams | None = None) -> np.ndarray:
    """Per-cell ``phi^2 Var[z_T | x] + (1 - phi^2) sigma2``."""
    run = _terminal(run)
    params = run.params if params is None else params
    w = forecast_weight(delta, params.theta)
    zs = run.z_samples(-1)
    post = zs.var(axis=0) if len(zs) > 1 else np.zeros(zs.shape[1:])
    return w * w * post + (1.0 - w * w) * params.sigma2


def forecast_field_draw(run: MalaRun, delta: float, params: CovarianceParams | None = None,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """One draw of ``z_{T+delta}`` per retained sample, ``(n_samples, M, N)``."""
    run = _terminal(run)
    params = run.params if params is None else params
    if delta < 1:
        raise ValueError("delta must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    w = forecast_weight(delta, params.theta)
    zs = run.z_samples(-1)
    spec = run.spectrum if params == run.params else circulant_eigenvalues(run.spectrum.ext, params)
    U = rng.standard_normal(zs.shape)
    return w * zs + (1.0 - w) * params.mean + np.sqrt(1.0 - w * w) * spec.apply_sqrt(U)


def forecast_intensity(lambda0: SpatialDensity | np.ndarray, lambda1_pred: float, field_draw: np.ndarray,
                       grid: GridSpec) -> Raster:
    """``lambda0(c) lambda1 exp(z(c))`` on the base lattice.

    ``field_draw`` may be given on the extended or the base lattice.
    """
    if not lambda1_pred > 0:
        raise ValueError("lambda1 prediction must be positive")
    z = np.asarray(field_draw, dtype=float)
    if z.shape != grid.shape:
        z = z[: grid.m, : grid.p]
    lam0 = lambda0.raster.filled() if isinstance(lambda0, SpatialDensity) else np.nan_to_num(lambda0)
    return Raster(grid, lam0 * float(lambda1_pred) * np.exp(z), units="intensity")


@dataclass(frozen=True, eq=False)
class ForecastField:
    delta: int
    mean: np.ndarray
    variance: np.ndarray
    intensity: Raster
    draws: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be >= 1")


def forecast(run, delta: int, lambda0: SpatialDensity, lambda1_pred: float,
             rng: np.random.Generator | None = None) -> ForecastField:
    """Mean field, variance field and the intensity averaged over field draws."""
    run = _terminal(run)
    grid = run.spectrum.ext.base
    draws = forecast_field_draw(run, delta, rng=rng)
    base = run.spectrum.ext.restrict(draws)
    lam0 = lambda0.raster.filled()
    mean_int = lam0 * float(lambda1_pred) * np.exp(base).mean(axis=0)
    return ForecastField(int(delta), forecast_mean(run, delta), forecast_variance(run, delta),
                         Raster(grid, mean_int, units="intensity"), draws)
