"""Second-order summaries: inhomogeneous space-time K, time-averaged pair
correlation, temporal autocovariance, cross-K, the permutation test for
space-time interaction and simulation envelopes.

Pair enumeration goes through ``scipy.spatial.cKDTree`` range queries so
``r_max``-limited statistics stay near-linear in the number of events.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .core import ObservationWindow, SpatioTemporalPointPattern
from .intensity import SpatialDensity, epanechnikov_temporal_intensity

TWO_PI = 2.0 * np.pi
DEFAULT_STOYAN_C = 0.15


class IntensityError(ValueError):
    pass


class SimulationError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"simulation {index} failed: {cause!r}")
        self.index = index


# ---------------------------------------------------------------------------
# edge corrections
# ---------------------------------------------------------------------------

def circle_fraction_inside(centers, radii, window: ObservationWindow) -> np.ndarray:
    """Fraction of the circumference of each circle lying inside ``window``.

    Exact up to floating point: the circle is cut at its intersections with
    the polygon edges and each arc is classified by its midpoint.
    """
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    r = np.broadcast_to(np.asarray(radii, dtype=float), (len(c),)).copy()
    n = len(c)
    out = np.ones(n)
    live = r > 0
    if not live.any():
        return out
    c, r = c[live], r[live]
    a, b = window.edges()
    e = b - a
    angles = []
    for (ax, ay), (ex, ey) in zip(a, e):
        fx, fy = ax - c[:, 0], ay - c[:, 1]
        A = ex * ex + ey * ey
        B = 2.0 * (ex * fx + ey * fy)
        C = fx * fx + fy * fy - r * r
        disc = B * B - 4.0 * A * C
        ok = disc > 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for sgn in (-1.0, 1.0):
            s = (-B + sgn * sq) / (2.0 * A)
            hit = ok & (s >= 0.0) & (s <= 1.0)
            px = ax + s * ex - c[:, 0]
            py = ay + s * ey - c[:, 1]
            angles.append(np.where(hit, np.arctan2(py, px), np.nan))
    ang = np.sort(np.column_stack(angles), axis=1)  # NaN sorts last
    k = np.sum(np.isfinite(ang), axis=1)
    none = k == 0
    ang[none, 0] = 0.0
    k[none] = 1
    rows = np.arange(len(ang))
    nxt = np.concatenate([ang[:, 1:], np.full((len(ang), 1), np.nan)], axis=1)
    nxt[rows, k - 1] = ang[rows, 0] + TWO_PI
    valid = np.arange(ang.shape[1])[None, :] < k[:, None]
    arc = np.where(valid, nxt - ang, 0.0)
    mid = np.where(valid, 0.5 * (ang + nxt), 0.0)
    mx = c[:, 0:1] + r[:, None] * np.cos(mid)
    my = c[:, 1:2] + r[:, None] * np.sin(mid)
    inside = window.contains(np.column_stack([mx[valid], my[valid]]), tol=0.0)
    inside_full = np.zeros(arc.shape, dtype=bool)
    inside_full[valid] = inside
    out[live] = np.sum(np.where(inside_full, arc, 0.0), axis=1) / TWO_PI
    return out


def boundary_distance(xy, window: ObservationWindow) -> np.ndarray:
    """Distance from each point to the nearest polygon edge."""
    p = np.atleast_2d(np.asarray(xy, dtype=float))
    a, b = window.edges()
    best = np.full(len(p), np.inf)
    for (ax, ay), (bx, by) in zip(a, b):
        ex, ey = bx - ax, by - ay
        L2 = ex * ex + ey * ey
        s = np.clip(((p[:, 0] - ax) * ex + (p[:, 1] - ay) * ey) / L2, 0.0, 1.0)
        best = np.minimum(best, np.hypot(ax + s * ex - p[:, 0], ay + s * ey - p[:, 1]))
    return best


_CHUNK = 1 << 16


def ripley_weights(s1, s2, window: ObservationWindow, edge_dist=None) -> np.ndarray:
    """Isotropic correction: inverse inside-fraction of the circle at ``s1`` through ``s2``.

    Circles closer to ``s1`` than the window boundary get weight 1 without
    any geometry; ``edge_dist`` may supply that boundary distance per row.
    """
    s1 = np.atleast_2d(np.asarray(s1, dtype=float))
    s2 = np.atleast_2d(np.asarray(s2, dtype=float))
    d = np.hypot(*(s2 - s1).T)
    bd = boundary_distance(s1, window) if edge_dist is None else np.asarray(edge_dist, dtype=float)
    w = np.ones(len(d))
    cut = np.flatnonzero(d >= bd)
    for k in range(0, len(cut), _CHUNK):
        idx = cut[k:k + _CHUNK]
        frac = circle_fraction_inside(s1[idx], d[idx], window)
        with np.errstate(divide="ignore"):
            w[idx] = np.where(frac > 0, 1.0 / frac, np.inf)
    return w


def ripley_weight_spatial(s1, s2, window: ObservationWindow) -> float:
    return float(ripley_weights(s1, s2, window)[0])


def ripley_weight_temporal(t1, t2, interval) -> np.ndarray | float:
    """1 when both reflections ``t1 +- |t2 - t1|`` lie in ``interval``, 2 when one does."""
    lo, hi = interval
    t1 = np.asarray(t1, dtype=float)
    lag = np.abs(np.asarray(t2, dtype=float) - t1)
    n_in = (t1 - lag >= lo).astype(int) + (t1 + lag <= hi).astype(int)
    w = np.where(lag == 0, 1.0, 2.0 / np.maximum(n_in, 1))
    return w if w.ndim else float(w)


# ---------------------------------------------------------------------------
# space-time K
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KSurface:
    r_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray

    @property
    def baseline(self) -> np.ndarray:
        return TWO_PI * self.r_grid[:, None] ** 2 * self.t_grid[None, :]

    @property
    def excess(self) -> np.ndarray:
        return self.values - self.baseline


def default_time_interval(t_range) -> tuple[float, float]:
    """Day ``t`` covers ``[t - 0.5, t + 0.5)``; the study period is their union."""
    return (t_range[0] - 0.5, t_range[1] + 0.5)


def separable_plugin_intensity(density: SpatialDensity, times, h_t: float) -> Callable:
    """``lambda(s, t) = lambda0(s) * lambda1_hat(t)`` with an Epanechnikov ``lambda1_hat``."""
    times = np.asarray(times)

    def intensity(xy, t):
        return density.at(xy) * epanechnikov_temporal_intensity(times, h_t, np.asarray(t, dtype=float))

    return intensity


def _event_intensity(intensity, xy, t) -> np.ndarray:
    lam = intensity(xy, t) if callable(intensity) else np.broadcast_to(np.asarray(intensity, dtype=float), (len(t),))
    lam = np.asarray(lam, dtype=float)
    bad = ~(lam > 0) | ~np.isfinite(lam)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise IntensityError(f"intensity {lam[k]} at event {k} ({tuple(xy[k])}, t={t[k]}) is not positive")
    return lam


@dataclass(frozen=True, eq=False)
class _SpatialPairs:
    i: np.ndarray  # ordered pairs: both orientations present
    j: np.ndarray
    r_idx: np.ndarray
    w: np.ndarray


def _spatial_pairs(xy, window, r_grid, t=None, t_max=None) -> _SpatialPairs:
    """Ordered pairs within ``r_grid[-1]``; with ``t`` and ``t_max`` also
    within that time lag (found through a tree on ``(x, y, t * scale)``)."""
    r_grid = np.asarray(r_grid, dtype=float)
    r_max = float(r_grid[-1])
    if t is None:
        pr = cKDTree(xy).query_pairs(r_max, output_type="ndarray")
    else:
        scale = r_max / max(float(t_max), 1e-12)
        pr = cKDTree(np.column_stack([xy, np.asarray(t, dtype=float) * scale])).query_pairs(
            np.sqrt(2.0) * r_max * (1 + 1e-12), output_type="ndarray")
        if len(pr):
            pr = pr[np.abs(t[pr[:, 0]] - t[pr[:, 1]]) <= t_max]
    if len(pr) == 0:
        e = np.zeros(0, dtype=np.int64)
        return _SpatialPairs(e, e, e, np.zeros(0))
    pr = pr.astype(np.int32)
    d = np.hypot(*(xy[pr[:, 1]] - xy[pr[:, 0]]).T)
    keep = d <= r_max
    pr, d = pr[keep], d[keep]
    i = np.concatenate([pr[:, 0], pr[:, 1]])
    j = np.concatenate([pr[:, 1], pr[:, 0]])
    d = np.concatenate([d, d])
    r_idx = np.searchsorted(r_grid, d, side="left").astype(np.int32)
    bd = boundary_distance(xy, window)
    w = ripley_weights(xy[i], xy[j], window, edge_dist=bd[i])
    return _SpatialPairs(i, j, r_idx, w)


def _k_from_pairs(sp: _SpatialPairs, t, lam, interval, r_grid, t_grid, volume) -> np.ndarray:
    lag = np.abs(t[sp.j] - t[sp.i])
    t_idx = np.searchsorted(t_grid, lag, side="left")
    keep = t_idx < len(t_grid)
    wt = ripley_weight_temporal(t[sp.i][keep], t[sp.j][keep], interval)
    contrib = sp.w[keep] * wt / (lam[sp.i][keep] * lam[sp.j][keep])
    flat = sp.r_idx[keep].astype(np.int64) * len(t_grid) + t_idx[keep]
    hist = np.bincount(flat, weights=contrib, minlength=len(r_grid) * len(t_grid)).reshape(len(r_grid), len(t_grid))
    return hist.cumsum(axis=0).cumsum(axis=1) / volume


def st_inhom_K(pattern: SpatioTemporalPointPattern, intensity, r_grid, t_grid, *,
               interval=None, jitter: np.random.Generator | None = None) -> KSurface:
    """Inhomogeneous space-time K-function with Ripley corrections in space and time.

    ``intensity`` is a callable ``(xy, t) -> values`` or per-event values.
    Time stamps are used as given unless ``jitter`` is supplied, in which case
    each day's events are spread uniformly over ``[t - 0.5, t + 0.5)``.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    interval = default_time_interval(pattern.t_range) if interval is None else interval
    volume = pattern.window.area * (interval[1] - interval[0])
    lam = _event_intensity(intensity, pattern.xy, pattern.t)
    t = pattern.t.astype(float)
    if jitter is not None:
        t = t + jitter.uniform(-0.5, 0.5, size=len(t))
    sp = _spatial_pairs(pattern.xy, pattern.window, r_grid, t, float(t_grid[-1]))
    return KSurface(r_grid, t_grid, _k_from_pairs(sp, t, lam, interval, r_grid, t_grid, volume))


def st_inhom_K_bruteforce(pattern, lam, r_grid, t_grid, interval=None) -> np.ndarray:
    """O(n^2) reference implementation (tests and small patterns)."""
    interval = default_time_interval(pattern.t_range) if interval is None else interval
    volume = pattern.window.area * (interval[1] - interval[0])
    xy, t = pattern.xy, pattern.t.astype(float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (len(t),))
    out = np.zeros((len(r_grid), len(t_grid)))
    for a in range(len(t)):
        for b in range(len(t)):
            if a == b:
                continue
            d = float(np.hypot(*(xy[b] - xy[a])))
            lag = abs(t[b] - t[a])
            w = ripley_weight_spatial(xy[a], xy[b], pattern.window) * ripley_weight_temporal(t[a], t[b], interval)
            v = w / (lam[a] * lam[b])
            out += v * (d <= np.asarray(r_grid))[:, None] * (lag <= np.asarray(t_grid))[None, :]
    return out / volume


# ---------------------------------------------------------------------------
# spatial summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PcfCurve:
    u_grid: np.ndarray
    values: np.ndarray
    h_s: float


def stoyan_bandwidth(mean_intensity: float, c: float = DEFAULT_STOYAN_C) -> float:
    """``c / sqrt(mean_intensity)``."""
    if not mean_intensity > 0:
        raise ValueError("mean intensity must be positive")
    return c / np.sqrt(mean_intensity)


def _epanechnikov(x, h):
    v = x / h
    return 0.75 / h * np.clip(1.0 - v * v, 0.0, None)


def _lambda1_per_day(lambda1, days) -> np.ndarray:
    if callable(lambda1):
        return np.asarray(lambda1(days), dtype=float)
    lam = np.asarray(lambda1, dtype=float)
    return np.broadcast_to(lam, days.shape).astype(float)


def same_day_pairs(pattern: SpatioTemporalPointPattern, r_max: float) -> np.ndarray:
    """Unordered pairs ``(a, b)``, ``a < b``, on the same day within ``r_max``."""
    if pattern.n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    x0, y0, x1, y1 = pattern.window.bbox
    sep = 4.0 * (r_max + np.hypot(x1 - x0, y1 - y0))  # keeps different days out of range
    pts = np.column_stack([pattern.xy, pattern.t * sep])
    return cKDTree(pts).query_pairs(float(r_max), output_type="ndarray")


def time_averaged_pcf(pattern: SpatioTemporalPointPattern, lambda0, lambda1, u_grid,
                      h_s: float) -> PcfCurve:
    """Pair correlation averaged over days, Epanechnikov smoothing in distance.

    ``lambda0`` is a :class:`SpatialDensity` or a callable ``xy -> density``;
    ``lambda1`` is per-day values (aligned to ``pattern.days``), a scalar, or a
    callable of the day.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    if np.any(u_grid <= 0):
        raise ValueError("pair correlation lags must be positive")
    if not h_s > 0:
        raise ValueError("h_s must be positive")
    days = pattern.days
    lam1 = _lambda1_per_day(lambda1, days)
    pr = same_day_pairs(pattern, float(u_grid.max() + h_s))
    out = np.zeros(len(u_grid))
    if len(pr):
        i = np.concatenate([pr[:, 0], pr[:, 1]])
        j = np.concatenate([pr[:, 1], pr[:, 0]])
        xy = pattern.xy
        d = np.hypot(*(xy[j] - xy[i]).T)
        l0 = lambda0.at(xy) if isinstance(lambda0, SpatialDensity) else np.asarray(lambda0(xy), dtype=float)
        l1 = lam1[pattern.t - days[0]]
        if np.any(l1[i] <= 0) or np.any(l0[i] <= 0):
            raise IntensityError("non-positive intensity at an event with a same-day neighbour")
        base = ripley_weights(xy[i], xy[j], pattern.window) / (l1[i] ** 2 * l0[i] * l0[j])
        for k, u in enumerate(u_grid):
            sel = np.abs(u - d) < h_s
            out[k] = np.sum(_epanechnikov(u - d[sel], h_s) * base[sel])
    out /= TWO_PI * u_grid * pattern.window.area * len(days)
    return PcfCurve(u_grid, out, float(h_s))


@dataclass(frozen=True, eq=False)
class AutocovCurve:
    v_grid: np.ndarray
    values: np.ndarray       # time-averaged C(v)
    pointwise: np.ndarray    # C_hat(t, v); row = t index, column = v index, NaN where undefined


def empirical_autocov(daily_counts, lambda1_fitted, v_max: int) -> AutocovCurve:
    """``C_hat(t, v) = N_t N_{t-v} - lambda1(t) lambda1(t-v)`` and its mean over ``t``."""
    if isinstance(daily_counts, list) and daily_counts and isinstance(daily_counts[0], tuple):
        counts = np.array([c for _, c in daily_counts], dtype=float)
    else:
        counts = np.asarray(daily_counts, dtype=float)
    lam = np.asarray(lambda1_fitted, dtype=float)
    T = len(counts)
    if lam.shape != counts.shape:
        raise ValueError("lambda1 must align with the daily counts")
    if not 1 <= v_max < T:
        raise ValueError(f"v_max must satisfy 1 <= v_max < T={T}")
    v_grid = np.arange(1, v_max + 1)
    point = np.full((T, v_max), np.nan)
    for k, v in enumerate(v_grid):
        point[v:, k] = counts[v:] * counts[:-v] - lam[v:] * lam[:-v]
    return AutocovCurve(v_grid, np.nanmean(point, axis=0), point)


def bivariate_K(xy1, xy2, window: ObservationWindow, r_grid):
    """Stationary cross-K in both directions with Ripley's isotropic correction.

    Returns ``(K12, K21, K0)`` with ``K0 = pi r^2``.  ``K12`` centres the
    correction circle on points of the first pattern.
    """
    xy1 = np.asarray(xy1, dtype=float).reshape(-1, 2)
    xy2 = np.asarray(xy2, dtype=float).reshape(-1, 2)
    if len(xy1) == 0 or len(xy2) == 0:
        raise ValueError("both patterns must be non-empty")
    r_grid = np.asarray(r_grid, dtype=float)
    area = window.area
    sdm = cKDTree(xy1).sparse_distance_matrix(cKDTree(xy2), float(r_grid[-1]), output_type="ndarray")
    a, b, d = sdm["i"], sdm["j"], sdm["v"]
    ridx = np.searchsorted(r_grid, d, side="left")
    keep = ridx < len(r_grid)
    a, b, ridx = a[keep], b[keep], ridx[keep]
    w12 = ripley_weights(xy1[a], xy2[b], window)
    w21 = ripley_weights(xy2[b], xy1[a], window)
    scale = area / (len(xy1) * len(xy2))
    k12 = np.cumsum(np.bincount(ridx, weights=w12, minlength=len(r_grid))) * scale
    k21 = np.cumsum(np.bincount(ridx, weights=w21, minlength=len(r_grid))) * scale
    return k12, k21, np.pi * r_grid ** 2


def spatial_inhom_K(xy, window: ObservationWindow, lam, r_grid, renormalise: bool = True) -> np.ndarray:
    """Inhomogeneous spatial K of a single pattern with Ripley's correction.

    With ``renormalise`` the intensity is rescaled so that ``sum(1/lam) = |W|``.
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    r_grid = np.asarray(r_grid, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (len(xy),)).astype(float)
    if np.any(lam <= 0):
        raise IntensityError("intensity must be positive at every point")
    area = window.area
    if renormalise and len(xy):
        lam = lam * np.sum(1.0 / lam) / area
    out = np.zeros(len(r_grid))
    if len(xy) < 2:
        return out
    pr = cKDTree(xy).query_pairs(float(r_grid[-1]), output_type="ndarray")
    if len(pr) == 0:
        return out
    i = np.concatenate([pr[:, 0], pr[:, 1]])
    j = np.concatenate([pr[:, 1], pr[:, 0]])
    d = np.hypot(*(xy[j] - xy[i]).T)
    ridx = np.searchsorted(r_grid, d, side="left")
    keep = ridx < len(r_grid)
    i, j, ridx = i[keep], j[keep], ridx[keep]
    w = ripley_weights(xy[i], xy[j], window) / (lam[i] * lam[j])
    return np.cumsum(np.bincount(ridx, weights=w, minlength=len(r_grid))) / area


# ---------------------------------------------------------------------------
# Monte-Carlo test and envelopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MCTestResult:
    fraction_below: float
    observed: float
    permuted: np.ndarray


def _spawn(seed, n):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def spacetime_mc_test(pattern: SpatioTemporalPointPattern, intensity, n_perm: int, r_grid, t_grid,
                      seed=None, *, interval=None, n_jobs: int = 1) -> MCTestResult:
    """Permutation test for space-time interaction.

    The statistic is ``U = sum_{r,t} (K_hat(r,t) - 2 pi r^2 t)``.  Time stamps
    are shuffled among events; ``intensity`` (callable ``(xy, t)``) is
    re-evaluated at the shuffled stamps.  Returns the fraction of shuffled
    statistics strictly below the observed one.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    r_grid = np.asarray(r_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    interval = default_time_interval(pattern.t_range) if interval is None else interval
    volume = pattern.window.area * (interval[1] - interval[0])
    baseline = TWO_PI * r_grid[:, None] ** 2 * t_grid[None, :]
    xy, t0 = pattern.xy, pattern.t.astype(np.int64)
    lo, hi = interval
    # U = sum_pairs contrib * #(r >= d) * #(t >= lag) / volume - sum(baseline): each
    # unordered pair is visited once with both orientation weights
    pr = cKDTree(xy).query_pairs(float(r_grid[-1]), output_type="ndarray") if len(xy) > 1 else np.zeros((0, 2), int)
    d = np.hypot(*(xy[pr[:, 1]] - xy[pr[:, 0]]).T) if len(pr) else np.zeros(0)
    keep = d <= r_grid[-1]
    i, j, d = pr[keep, 0].astype(np.int32), pr[keep, 1].astype(np.int32), d[keep]
    rfac = len(r_grid) - np.searchsorted(r_grid, d, side="left")
    bd = boundary_distance(xy, pattern.window)
    a_ij = rfac * ripley_weights(xy[i], xy[j], pattern.window, edge_dist=bd[i])
    a_ji = rfac * ripley_weights(xy[j], xy[i], pattern.window, edge_dist=bd[j])
    span = int(t0.max() - t0.min()) if len(t0) else 0
    lags = np.arange(span + 1)
    tfac = (len(t_grid) - np.searchsorted(t_grid, lags, side="left")).astype(float)
    base_sum = float(baseline.sum())

    def _wt(tc, lag):
        n_in = (tc - lag >= lo).astype(np.int8) + (tc + lag <= hi).astype(np.int8)
        return np.where(lag == 0, 1.0, 2.0 / np.maximum(n_in, 1))

    def statistic(t):
        lam = _event_intensity(intensity, xy, t)
        ti, tj = t[i], t[j]
        lag = np.abs(ti - tj)
        f = tfac[lag]
        sel = np.flatnonzero(f)
        ti, tj, lag = ti[sel], tj[sel], lag[sel]
        ii, jj = i[sel], j[sel]
        c = f[sel] * (a_ij[sel] * _wt(ti, lag) + a_ji[sel] * _wt(tj, lag)) / (lam[ii] * lam[jj])
        return float(c.sum()) / volume - base_sum

    observed = statistic(t0)
    rngs = _spawn(seed, n_perm)
    permuted = np.array(_map(lambda g: statistic(g.permutation(t0)), rngs, n_jobs))
    return MCTestResult(float(np.mean(permuted < observed)), observed, permuted)


@dataclass(frozen=True, eq=False)
class Envelope:
    lo: np.ndarray
    hi: np.ndarray
    samples: np.ndarray

    def contains(self, curve, atol: float = 0.0) -> np.ndarray:
        curve = np.asarray(curve)
        return (curve >= self.lo - atol) & (curve <= self.hi + atol)


def envelope(simulate: Callable, statistic: Callable, n_sim: int = 200, seed=None,
             n_jobs: int = 1) -> Envelope:
    """Pointwise min/max of ``statistic(simulate(rng))`` over ``n_sim`` draws."""
    if n_sim < 2:
        raise ValueError("n_sim must be >= 2")

    def one(arg):
        k, rng = arg
        try:
            return np.asarray(statistic(simulate(rng)), dtype=float)
        except Exception as exc:  # noqa: BLE001 - re-raised with the replicate index
            raise SimulationError(k, exc) from exc

    samples = np.array(_map(one, list(enumerate(_spawn(seed, n_sim))), n_jobs))
    return Envelope(samples.min(axis=0), samples.max(axis=0), samples)
