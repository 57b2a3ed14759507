"""Pipeline configuration read from a TOML file.

Every section mirrors the defaults of the module it configures.  Unknown keys
and out-of-range values are rejected with the dotted field name.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .temporal_glm import DEFAULT_ORIGIN, SEASONS


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class PathsConfig:
    pattern: str = ""
    window: str = ""
    out: str = "out"


@dataclass
class DataConfig:
    t_range: list = field(default_factory=list)   # empty: taken from the data
    holdout: int = 6


@dataclass
class GridConfig:
    m: int = 128
    p: int = 128


@dataclass
class BandwidthConfig:
    K: int = 5
    epsilon: float = 1e-5
    max_iter: int = 500
    seed: int | None = None


@dataclass
class GlmConfig:
    reference_seasons: list = field(default_factory=lambda: ["Spring", "Winter"])
    origin: str = DEFAULT_ORIGIN.isoformat()
    tol: float = 1e-8
    intercept: bool = False
    weekdays: bool = True
    seasons: bool = True
    harmonics: bool = True
    trend: bool = True


@dataclass
class SummariesConfig:
    r_max: float = 0.0          # 0: an eighth of the shorter window side
    n_r: int = 20
    t_max: int = 10
    u_max: float = 0.0          # 0: same as r_max
    n_u: int = 40
    v_max: int = 10
    h_t: float = 7.0
    stoyan_c: float = 0.15
    n_perm: int = 200
    n_sim: int = 200
    seed: int | None = None


@dataclass
class CovfitConfig:
    exponent: float = 0.25
    u_range: list = field(default_factory=list)   # empty: [h_s, u_max]
    v_range: list = field(default_factory=list)   # empty: all lags
    theta_bounds: list = field(default_factory=lambda: [1e-2, 1e2])


@dataclass
class MalaConfig:
    n_iter: int = 5000
    burn_in: int | None = None    # None: 20% of n_iter
    zeta: int = 7
    target_accept: float = 0.574
    thin: int = 10
    seed: int | None = None


@dataclass
class ForecastConfig:
    deltas: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    seed: int | None = None


@dataclass
class SimulateConfig:
    n_realizations: int = 10
    n_sim: int = 200
    seed: int | None = None
    process: str = "poisson"    # "poisson": from the forecast intensity; "cox": one field draw per pattern


@dataclass
class PipelineConfig:
    seed: int = 0
    threads: int = 1
    paths: PathsConfig = field(default_factory=PathsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    bandwidth: BandwidthConfig = field(default_factory=BandwidthConfig)
    glm: GlmConfig = field(default_factory=GlmConfig)
    summaries: SummariesConfig = field(default_factory=SummariesConfig)
    covfit: CovfitConfig = field(default_factory=CovfitConfig)
    mala: MalaConfig = field(default_factory=MalaConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def stage_seed(self, name: str) -> int:
        """Seed of a named RNG consumer: explicit override or derived from the root seed."""
        section = getattr(self, name, None)
        explicit = getattr(section, "seed", None)
        if explicit is not None:
            return int(explicit)
        k = SEED_STREAMS.index(name)
        return int(np.random.SeedSequence(self.seed, spawn_key=(k,)).generate_state(1)[0])

    def validate(self, check_paths: bool = True) -> "PipelineConfig":
        _validate(self, check_paths)
        return self


SEED_STREAMS = ("bandwidth", "summaries", "mala", "forecast", "simulate")


def _positive(name, v, strict=True):
    if v is None or not np.isfinite(v) or (v <= 0 if strict else v < 0):
        raise ConfigError(name, f"must be {'positive' if strict else 'non-negative'}, got {v!r}")


def _validate(c: PipelineConfig, check_paths: bool):
    if check_paths:
        for key in ("pattern", "window"):
            p = getattr(c.paths, key)
            if not p:
                raise ConfigError(f"paths.{key}", "is required")
            if not Path(p).is_file():
                raise ConfigError(f"paths.{key}", f"file not found: {p}")
    if c.threads < 1:
        raise ConfigError("threads", "must be >= 1")
    if c.data.t_range and (len(c.data.t_range) != 2 or c.data.t_range[0] > c.data.t_range[1]):
        raise ConfigError("data.t_range", "must be [T0, T1] with T0 <= T1")
    if c.data.holdout < 0:
        raise ConfigError("data.holdout", "must be >= 0")
    for k in ("m", "p"):
        if getattr(c.grid, k) < 1:
            raise ConfigError(f"grid.{k}", "must be >= 1")
    if c.bandwidth.K < 1:
        raise ConfigError("bandwidth.K", "must be >= 1")
    _positive("bandwidth.epsilon", c.bandwidth.epsilon)
    if c.bandwidth.max_iter < 1:
        raise ConfigError("bandwidth.max_iter", "must be >= 1")
    bad = set(c.glm.reference_seasons) - set(SEASONS)
    if bad:
        raise ConfigError("glm.reference_seasons", f"unknown seasons {sorted(bad)}")
    try:
        dt.date.fromisoformat(c.glm.origin)
    except ValueError as exc:
        raise ConfigError("glm.origin", str(exc)) from None
    _positive("glm.tol", c.glm.tol)
    s = c.summaries
    _positive("summaries.r_max", s.r_max, strict=False)
    _positive("summaries.u_max", s.u_max, strict=False)
    for k in ("n_r", "t_max", "n_u", "v_max", "n_perm"):
        if getattr(s, k) < 1:
            raise ConfigError(f"summaries.{k}", "must be >= 1")
    if s.n_sim < 2:
        raise ConfigError("summaries.n_sim", "must be >= 2")
    _positive("summaries.h_t", s.h_t)
    _positive("summaries.stoyan_c", s.stoyan_c)
    _positive("covfit.exponent", c.covfit.exponent)
    for k in ("u_range", "v_range", "theta_bounds"):
        v = getattr(c.covfit, k)
        if v and (len(v) != 2 or not 0 <= v[0] < v[1]):
            raise ConfigError(f"covfit.{k}", "must be [lo, hi] with 0 <= lo < hi")
    m = c.mala
    if m.n_iter < 1:
        raise ConfigError("mala.n_iter", "must be >= 1")
    if m.burn_in is not None and not 0 <= m.burn_in < m.n_iter:
        raise ConfigError("mala.burn_in", "must satisfy 0 <= burn_in < n_iter")
    if m.zeta < 1:
        raise ConfigError("mala.zeta", "must be >= 1")
    if not 0 < m.target_accept < 1:
        raise ConfigError("mala.target_accept", "must lie in (0, 1)")
    if m.thin < 1:
        raise ConfigError("mala.thin", "must be >= 1")
    if not c.forecast.deltas or any(int(d) != d or d < 1 for d in c.forecast.deltas):
        raise ConfigError("forecast.deltas", "must be a non-empty list of integers >= 1")
    if c.simulate.n_realizations < 1:
        raise ConfigError("simulate.n_realizations", "must be >= 1")
    if c.simulate.n_sim < 2:
        raise ConfigError("simulate.n_sim", "must be >= 2")
    if c.simulate.process not in ("poisson", "cox"):
        raise ConfigError("simulate.process", "must be 'poisson' or 'cox'")


def _fill(cls, data: dict, prefix: str):
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{prefix}{key}", "unknown key")
        f = names[key]
        factory = f.default_factory
        if factory is not dataclasses.MISSING and dataclasses.is_dataclass(factory):
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix}{key}", "must be a table")
            kwargs[key] = _fill(factory, value, f"{prefix}{key}.")
            continue
        default = factory() if factory is not dataclasses.MISSING else f.default
        if default is not None:
            ok = (isinstance(value, (int, float)) and not isinstance(value, bool)
                  if isinstance(default, float) else isinstance(value, type(default)))
            if isinstance(default, int) and not isinstance(default, bool):
                ok = isinstance(value, int) and not isinstance(value, bool)
            if not ok:
                raise ConfigError(f"{prefix}{key}", f"expected {type(default).__name__}, got {value!r}")
        kwargs[key] = float(value) if isinstance(default, float) else value
    return cls(**kwargs)


def config_from_dict(data: dict, base_dir: str | Path | None = None) -> PipelineConfig:
    cfg = _fill(PipelineConfig, data, "")
    if base_dir is not None:
        for key in ("pattern", "window", "out"):
            v = getattr(cfg.paths, key)
            if v and not Path(v).is_absolute():
                setattr(cfg.paths, key, str(Path(base_dir) / v))
    return cfg


def load_config(path: str | Path | None, validate: bool = True, **overrides) -> PipelineConfig:
    """Read a TOML file (``None`` gives the defaults); relative paths resolve
    against the file's directory."""
    if path is None:
        cfg = PipelineConfig()
    else:
        path = Path(path)
        with open(path, "rb") as fh:
            cfg = config_from_dict(tomllib.load(fh), base_dir=path.parent)
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("seed", "threads"):
            setattr(cfg, key, value)
        elif key == "out":
            cfg.paths.out = str(value)
        else:
            raise ConfigError(key, "unknown override")
    if validate:
        cfg.validate()
    return cfg
