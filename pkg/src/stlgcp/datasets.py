"""Synthetic LGCP datasets with a matching pipeline configuration."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import GridSpec, ObservationWindow, Raster, save_point_pattern
from .covfit import CovarianceParams
from .intensity import SpatialDensity, normalize_to_density
from .simulate import LgcpRealization, simulate_lgcp
from .temporal_glm import DEFAULT_ORIGIN

# an irregular pentagon inside the unit-ish square [0, 10]^2
DEFAULT_VERTICES = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 7.0], [6.0, 10.0], [0.0, 9.0]])


def bump_density(grid: GridSpec, centres=((3.0, 3.0), (7.0, 6.0)), scales=(2.0, 1.5),
                 weights=(0.6, 0.4), floor: float = 0.2) -> SpatialDensity:
    """Mixture of Gaussian bumps over a constant floor, normalised on the grid."""
    cx, cy = grid.centroids()
    v = np.full(grid.shape, floor)
    for (mx, my), s, w in zip(centres, scales, weights):
        v += w * np.exp(-((cx - mx) ** 2 + (cy - my) ** 2) / (2 * s * s))
    return normalize_to_density(Raster(grid, v), full=v)


def weekday_lambda1(days, base: float = 150.0, origin: dt.date = DEFAULT_ORIGIN,
                    effects=(0.05, 0.0, 0.0, 0.0, 0.1, 0.2, 0.15)) -> np.ndarray:
    """Daily expected counts with a multiplicative weekday effect (Monday first)."""
    wd = np.array([(origin + dt.timedelta(days=int(d) - 1)).isoweekday() for d in days])
    return base * np.exp(np.asarray(effects)[wd - 1])


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    realization: LgcpRealization
    params: CovarianceParams
    density: SpatialDensity
    lambda1: np.ndarray
    grid: GridSpec


def synthetic_dataset(params: CovarianceParams = CovarianceParams(1.5, 1.0, 2.0), n_days: int = 60,
                      base_rate: float = 150.0, m: int = 32, seed: int = 0,
                      vertices=DEFAULT_VERTICES, weekday_effects=None) -> SyntheticDataset:
    """One LGCP realization over a pentagon; ``weekday_effects=()`` gives a constant daily rate."""
    window = ObservationWindow(np.asarray(vertices, dtype=float))
    grid = GridSpec.from_window(window, m, m)
    dens = bump_density(grid)
    days = np.arange(1, n_days + 1)
    if weekday_effects is None:
        lam1 = weekday_lambda1(days, base_rate)
    elif len(weekday_effects) == 0:
        lam1 = np.full(n_days, float(base_rate))
    else:
        lam1 = weekday_lambda1(days, base_rate, effects=weekday_effects)
    real = simulate_lgcp(params, dens, lam1, grid, (1, n_days), np.random.default_rng(seed), window)
    return SyntheticDataset(real, params, dens, lam1, grid)


CONFIG_TEMPLATE = """\
# pipeline configuration for the bundled synthetic dataset
seed = {seed}
threads = 1

[paths]
pattern = "pattern.csv"
window = "window.csv"
out = "out"

[data]
holdout = 6

[grid]
m = {m}
p = {m}

[glm]
seasons = false
harmonics = false

[summaries]
r_max = 1.25
u_max = 3.0
n_perm = 50
n_sim = 50
v_max = 6

[covfit]
v_range = [1, 4]

[mala]
n_iter = 2000
zeta = 7

[simulate]
n_realizations = 3
n_sim = 40
"""


def write_synthetic(directory, seed: int = 0, **kwargs) -> Path:
    """Write ``pattern.csv``, ``window.csv`` and ``config.toml``; returns the config path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ds = synthetic_dataset(seed=seed, **kwargs)
    save_point_pattern(ds.realization.pattern, d / "pattern.csv")
    with open(d / "window.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("x,y\n")
        for x, y in ds.realization.pattern.window.vertices:
            fh.write(f"{float(x)!r},{float(y)!r}\n")
    (d / "config.toml").write_text(CONFIG_TEMPLATE.format(seed=seed, m=ds.grid.m))
    return d / "config.toml"


def bundled_example_dir() -> Path:
    """Directory of the synthetic example shipped with the package."""
    return Path(__file__).parent / "data" / "synthetic"
