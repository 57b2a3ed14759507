"""End-to-end analysis in nine resumable stages.

Each stage writes its public outputs (CSV / ASCII grids) under the output
directory, keeps the arrays later stages need under ``state/<stage>/`` and
appends one JSON line to ``manifest.jsonl``.  A stage is skipped on resume
when its inputs hash matches the previous manifest and its outputs are
unchanged on disk.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import export
from .bandwidth import bandwidth_from_clustering, kmeans_cluster
from .config import PipelineConfig
from .core import (GridSpec, Raster, SpatioTemporalPointPattern, aggregate_counts, daily_count_array,
                   load_point_pattern, load_window, save_point_pattern)
from .covfit import CovarianceParams, fit_spatial_params, fit_theta
from .grf import circulant_eigenvalues, extend_grid
from .inference import TerminalSlice, build_problem, forecast, forecast_weight, run_mala
from .intensity import kernel_sum_grid, normalize_to_density
from .simulate import simulate_from_field_draws, simulate_poisson_from_raster
from .summary import (AutocovCurve, PcfCurve, empirical_autocov, envelope, separable_plugin_intensity,
                      spacetime_mc_test, spatial_inhom_K, st_inhom_K, stoyan_bandwidth, time_averaged_pcf)
from .temporal_glm import (DesignSpec, build_design, irls_fit, write_coefficient_table,
                           write_deviance_summary)

STAGES = ("ingest", "bandwidth", "intensity", "glm-fit", "summaries", "fit-cov", "mala", "forecast", "simulate")

_DEPS = {
    "ingest": (), "bandwidth": ("ingest",), "intensity": ("ingest", "bandwidth"),
    "glm-fit": ("ingest",), "summaries": ("ingest", "intensity", "glm-fit"),
    "fit-cov": ("summaries", "intensity", "glm-fit"), "mala": ("ingest", "intensity", "glm-fit", "fit-cov"),
    "forecast": ("mala", "intensity", "glm-fit"), "simulate": ("ingest", "forecast", "summaries"),
}
_SECTIONS = {
    "ingest": ("data",), "bandwidth": ("bandwidth",), "intensity": ("grid",), "glm-fit": ("glm", "forecast"),
    "summaries": ("summaries",), "fit-cov": ("covfit",), "mala": ("mala",), "forecast": ("forecast",),
    "simulate": ("simulate", "forecast"),
}
_SEEDED = {"bandwidth": "bandwidth", "summaries": "summaries", "mala": "mala", "forecast": "forecast",
           "simulate": "simulate"}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _save_state(directory: Path, state: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for old in directory.glob("*.npy"):
        old.unlink()
    scalars = {}
    for k, v in state.items():
        if isinstance(v, np.ndarray):
            np.save(directory / f"{k}.npy", v, allow_pickle=False)
        else:
            scalars[k] = v
    (directory / "scalars.json").write_text(json.dumps(scalars, sort_keys=True, indent=1) + "\n")


def _load_state(directory: Path) -> dict:
    state = json.loads((directory / "scalars.json").read_text())
    for f in sorted(directory.glob("*.npy")):
        state[f.stem] = np.load(f, allow_pickle=False)
    return state


@dataclass
class StageRecord:
    stage: str
    inputs_hash: str
    outputs: dict
    wall_time: float
    seed: int | None
    resumed: bool = False

    def to_json(self) -> str:
        return json.dumps(dict(stage=self.stage, inputs_hash=self.inputs_hash, outputs=self.outputs,
                               wall_time=round(self.wall_time, 6), seed=self.seed, resumed=self.resumed),
                          sort_keys=True)


@dataclass
class PipelineResult:
    status: int
    records: list = field(default_factory=list)
    state: dict = field(default_factory=dict)
    out: Path | None = None


class PipelineContext:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.paths.out)
        self.state: dict[str, dict] = {}
        self.window = load_window(cfg.paths.window)
        self.grid = GridSpec.from_window(self.window, cfg.grid.m, cfg.grid.p)

    # derived objects rebuilt from stored state -------------------------------------------------
    def pattern(self) -> SpatioTemporalPointPattern:
        s = self.state["ingest"]
        return SpatioTemporalPointPattern(s["xy"], s["t"], self.window, tuple(s["t_range"]))

    def training(self) -> SpatioTemporalPointPattern:
        s = self.state["ingest"]
        return self.pattern().restrict_days(*s["train_range"])

    def density(self):
        s = self.state["intensity"]
        return normalize_to_density(Raster(self.grid, s["full"]), bandwidth=s["h"], full=s["full"])

    def params(self) -> CovarianceParams:
        s = self.state["fit-cov"]
        return CovarianceParams(s["sigma2"], s["phi"], s["theta"])

    def r_grid(self):
        s = self.cfg.summaries
        x0, y0, x1, y1 = self.window.bbox
        r_max = s.r_max or 0.125 * min(x1 - x0, y1 - y0)
        return np.linspace(r_max / s.n_r, r_max, s.n_r)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _stage_ingest(ctx: PipelineContext):
    cfg = ctx.cfg
    t_range = tuple(cfg.data.t_range) if cfg.data.t_range else None
    pattern, dropped = load_point_pattern(cfg.paths.pattern, ctx.window, t_range)
    T0, T1 = pattern.t_range
    train = (T0, T1 - cfg.data.holdout)
    if train[1] < train[0] + 1:
        raise ValueError(f"holdout of {cfg.data.holdout} days leaves fewer than two training days")
    save_point_pattern(pattern, ctx.out / "pattern.csv")
    days, counts = daily_count_array(pattern)
    export.write_rows(ctx.out / "daily_counts.csv", ["t", "n", "training"],
                      ((d, c, int(d <= train[1])) for d, c in zip(days, counts)))
    state = dict(xy=pattern.xy.copy(), t=pattern.t.copy(), t_range=[T0, T1], train_range=list(train),
                 dropped=dropped)
    return ["pattern.csv", "daily_counts.csv"], state


def _stage_bandwidth(ctx: PipelineContext):
    cfg = ctx.cfg.bandwidth
    c = kmeans_cluster(ctx.training().xy, cfg.K, cfg.epsilon, cfg.max_iter, ctx.cfg.stage_seed("bandwidth"))
    h = bandwidth_from_clustering(c)
    export.write_rows(ctx.out / "bandwidth.csv", ["h", "K", "epsilon", "sse", "n_iter", "converged"],
                      [(h, cfg.K, cfg.epsilon, c.sse, c.n_iter, int(c.converged))])
    return ["bandwidth.csv"], dict(h=h)


def _stage_intensity(ctx: PipelineContext):
    h = ctx.state["bandwidth"]["h"]
    full = kernel_sum_grid(ctx.training().xy, ctx.grid, h)
    ctx.state["intensity"] = dict(full=full, h=h)
    dens = ctx.density()
    export.write_esri_ascii(dens.raster, ctx.out / "density.asc")
    export.write_raster_csv(dens.raster, ctx.out / "density.csv")
    return ["density.asc", "density.csv"], dict(full=full, h=h)


def _glm_spec(ctx: PipelineContext) -> dict:
    g = ctx.cfg.glm
    return dict(calendar_origin=dt.date.fromisoformat(g.origin), reference_seasons=frozenset(g.reference_seasons),
                intercept=g.intercept, weekdays=g.weekdays, seasons=g.seasons, harmonics=g.harmonics,
                trend=g.trend)


def _stage_glm(ctx: PipelineContext):
    train = ctx.training()
    days, y = daily_count_array(train)
    opts = _glm_spec(ctx)
    design = build_design(train.t_range, **opts)
    fit = irls_fit(design, y, tol=ctx.cfg.glm.tol)
    write_coefficient_table(fit, ctx.out / "glm_coefficients.csv")
    write_deviance_summary(fit, ctx.out / "glm_deviance.csv")
    spec = DesignSpec(origin=opts.pop("calendar_origin"), **opts)
    T = train.t_range[1]
    future = np.array([T + int(d) for d in ctx.cfg.forecast.deltas])
    lam_future = np.exp(spec.rows(future) @ fit.coefficients)
    rows = [(d, yv, f, 1) for d, yv, f in zip(days, y, fit.fitted)]
    rows += [(d, "", f, 0) for d, f in zip(future, lam_future)]
    export.write_rows(ctx.out / "lambda1.csv", ["t", "observed", "lambda1", "training"], rows)
    return (["glm_coefficients.csv", "glm_deviance.csv", "lambda1.csv"],
            dict(coefficients=fit.coefficients, lambda1=fit.fitted, days=days, future_days=future,
                 lambda1_future=lam_future))


def _stage_summaries(ctx: PipelineContext):
    s = ctx.cfg.summaries
    train = ctx.training()
    dens = ctx.density()
    lam1 = ctx.state["glm-fit"]["lambda1"]
    n_days = len(train.days)
    r_grid = ctx.r_grid()
    t_max = min(s.t_max, n_days - 1)
    t_grid = np.arange(1, t_max + 1, dtype=float)
    plug = separable_plugin_intensity(dens, train.t, s.h_t)
    K = st_inhom_K(train, plug, r_grid, t_grid)
    export.write_surface(ctx.out / "kst.csv", r_grid, t_grid, K.values)

    area = ctx.window.area
    h_s = stoyan_bandwidth(train.n / (n_days * area), s.stoyan_c)
    u_max = s.u_max or r_grid[-1]
    u_grid = np.linspace(u_max / s.n_u, u_max, s.n_u)
    pcf = time_averaged_pcf(train, dens, lam1, u_grid, h_s)
    export.write_curve(ctx.out / "pcf.csv", "u", u_grid, pcf.values)

    days, counts = daily_count_array(train)
    ac = empirical_autocov(counts, lam1, min(s.v_max, n_days - 1))
    export.write_curve(ctx.out / "autocov.csv", "v", ac.v_grid, ac.values)

    mc = spacetime_mc_test(train, plug, s.n_perm, r_grid, t_grid, seed=ctx.cfg.stage_seed("summaries"),
                           n_jobs=ctx.cfg.threads)
    export.write_rows(ctx.out / "mctest.csv", ["n_perm", "observed", "fraction_below"],
                      [(s.n_perm, mc.observed, mc.fraction_below)])
    return (["kst.csv", "pcf.csv", "autocov.csv", "mctest.csv"],
            dict(u_grid=u_grid, pcf=pcf.values, h_s=h_s, v_grid=ac.v_grid, autocov=ac.values,
                 mc_fraction=mc.fraction_below))


def _stage_fitcov(ctx: PipelineContext):
    c = ctx.cfg.covfit
    s = ctx.state["summaries"]
    pcf = PcfCurve(s["u_grid"], s["pcf"], s["h_s"])
    sf = fit_spatial_params(pcf, u_range=tuple(c.u_range) or None, exponent=c.exponent)
    ac = AutocovCurve(s["v_grid"], s["autocov"], None)
    tf = fit_theta(ac, sf.sigma2, sf.phi, ctx.density(), ctx.state["glm-fit"]["lambda1"],
                   v_range=tuple(c.v_range) or None, bounds=tuple(c.theta_bounds))
    export.write_rows(ctx.out / "fitcov.csv",
                      ["sigma2", "phi", "theta", "contrast_spatial", "contrast_temporal", "exponent",
                       "u_min", "u_max", "v_min", "v_max", "spatial_at_boundary", "temporal_at_boundary"],
                      [(sf.sigma2, sf.phi, tf.theta, sf.contrast, tf.contrast, c.exponent, *sf.u_range,
                        *tf.v_range, int(sf.at_boundary), int(tf.at_boundary))])
    return ["fitcov.csv"], dict(sigma2=sf.sigma2, phi=sf.phi, theta=tf.theta)


def _stage_mala(ctx: PipelineContext):
    m = ctx.cfg.mala
    train = ctx.training()
    counts = aggregate_counts(train, ctx.grid)
    days = counts.days[-m.zeta:]
    lam1 = ctx.state["glm-fit"]["lambda1"][-len(days):]
    params = ctx.params()
    problem = build_problem(counts, params, ctx.density(), lam1, days=days)
    run = run_mala(problem, m.n_iter, m.burn_in, m.target_accept, seed=ctx.cfg.stage_seed("mala"), thin=m.thin)
    export.write_rows(ctx.out / "mala_diagnostics.csv", ["iteration", "log_target", "acceptance", "xi2"],
                      run.diagnostics_rows())
    zT = run.z_samples(-1)
    mean = Raster(ctx.grid, problem.spectrum.ext.restrict(zT.mean(axis=0)), units="field")
    export.write_raster_csv(mean, ctx.out / "mala_posterior_mean.csv")
    return (["mala_diagnostics.csv", "mala_posterior_mean.csv"],
            dict(z_T=zT, acceptance_rate=run.acceptance_rate, xi2=run.xi2))


def _stage_forecast(ctx: PipelineContext):
    params = ctx.params()
    spectrum = circulant_eigenvalues(extend_grid(ctx.grid), params)
    term = TerminalSlice(spectrum, ctx.state["mala"]["z_T"])
    dens = ctx.density()
    g = ctx.state["glm-fit"]
    rng = np.random.default_rng(ctx.cfg.stage_seed("forecast"))
    outputs, rows, state = [], [], {}
    for d, day, lam in zip(ctx.cfg.forecast.deltas, g["future_days"], g["lambda1_future"]):
        fc = forecast(term, int(d), dens, float(lam), rng=rng)
        export.write_esri_ascii(fc.intensity, ctx.out / f"forecast_delta{d}.asc")
        export.write_raster_csv(fc.intensity, ctx.out / f"forecast_delta{d}.csv")
        outputs += [f"forecast_delta{d}.asc", f"forecast_delta{d}.csv"]
        rows.append((int(d), int(day), float(lam), fc.intensity.integral(), forecast_weight(d, params.theta)))
        state[f"intensity_{d}"] = fc.intensity.filled()
        state[f"draws_{d}"] = spectrum.ext.restrict(fc.draws).astype(np.float32)
    export.write_rows(ctx.out / "forecast_summary.csv",
                      ["delta", "t", "lambda1", "integrated_intensity", "weight"], rows)
    return outputs + ["forecast_summary.csv"], state


def _stage_simulate(ctx: PipelineContext):
    cfg = ctx.cfg.simulate
    pattern = ctx.pattern()
    T_obs = pattern.t_range[1]
    r_grid = ctx.r_grid()
    dens = ctx.density()
    outputs = []
    seeds = np.random.SeedSequence(ctx.cfg.stage_seed("simulate")).spawn(len(ctx.cfg.forecast.deltas))
    for ss, d, day in zip(seeds, ctx.cfg.forecast.deltas, ctx.state["glm-fit"]["future_days"]):
        raster = Raster(ctx.grid, ctx.state["forecast"][f"intensity_{d}"])
        draws = ctx.state["forecast"][f"draws_{d}"]
        lam1 = float(ctx.state["glm-fit"]["lambda1_future"][list(ctx.cfg.forecast.deltas).index(d)])

        def draw(rng, draws=draws, lam1=lam1, raster=raster):
            if cfg.process == "cox":
                return simulate_from_field_draws(dens, lam1, draws, ctx.grid, rng, ctx.window)
            return simulate_poisson_from_raster(raster, rng, ctx.window)

        sub = ctx.out / "sim" / f"delta{d}"
        sub.mkdir(parents=True, exist_ok=True)
        real_ss, env_ss = ss.spawn(2)
        for k, rs in enumerate(real_ss.spawn(cfg.n_realizations)):
            xy = draw(np.random.default_rng(rs))
            p = SpatioTemporalPointPattern(xy, np.full(len(xy), int(day)), ctx.window, (int(day), int(day)))
            save_point_pattern(p, sub / f"pattern_{k:04d}.csv")
            outputs.append(str(Path("sim") / f"delta{d}" / f"pattern_{k:04d}.csv"))
        if day > T_obs:
            continue
        observed = pattern.day(int(day))
        lam_obs = raster.at(observed) if len(observed) else np.zeros(0)
        if len(observed) < 2 or np.any(lam_obs <= 0):
            continue

        def stat(xy):
            return spatial_inhom_K(xy, ctx.window, raster.at(xy), r_grid) if len(xy) else np.zeros(len(r_grid))

        env = envelope(draw, stat,
                       n_sim=cfg.n_sim, seed=env_ss, n_jobs=ctx.cfg.threads)
        obs_k = stat(observed)
        export.write_rows(ctx.out / f"envelope_delta{d}.csv", ["r", "observed", "lo", "hi", "inside"],
                          zip(r_grid, obs_k, env.lo, env.hi, env.contains(obs_k).astype(int)))
        outputs.append(f"envelope_delta{d}.csv")
    return outputs, {}


_RUNNERS = {"ingest": _stage_ingest, "bandwidth": _stage_bandwidth, "intensity": _stage_intensity,
            "glm-fit": _stage_glm, "summaries": _stage_summaries, "fit-cov": _stage_fitcov,
            "mala": _stage_mala, "forecast": _stage_forecast, "simulate": _stage_simulate}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _inputs_hash(ctx: PipelineContext, stage: str, records: dict) -> str:
    cfg = ctx.cfg.to_dict()
    payload = dict(stage=stage, sections={k: cfg[k] for k in _SECTIONS[stage]},
                   upstream={d: records[d].outputs for d in _DEPS[stage]},
                   seed=ctx.cfg.stage_seed(_SEEDED[stage]) if stage in _SEEDED else None)
    if stage == "ingest":
        payload["files"] = [file_hash(ctx.cfg.paths.pattern), file_hash(ctx.cfg.paths.window)]
    if stage in ("intensity", "mala", "forecast", "simulate"):
        payload["grid"] = cfg["grid"]
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _previous_manifest(path: Path) -> dict:
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            out[rec["stage"]] = rec
    return out


def run_pipeline(cfg: PipelineConfig, resume: bool = False, stages=None, log=None) -> PipelineResult:
    """Run the stages in order; returns exit status 0 and the manifest records.

    On failure a :class:`PipelineError` names the stage; outputs and manifest
    entries of completed stages are kept.
    """
    cfg.validate()
    ctx = PipelineContext(cfg)
    ctx.out.mkdir(parents=True, exist_ok=True)
    manifest = ctx.out / "manifest.jsonl"
    previous = _previous_manifest(manifest) if resume else {}
    wanted = STAGES if stages is None else tuple(stages)
    last = max(STAGES.index(s) for s in wanted)
    records: dict[str, StageRecord] = {}
    with open(manifest, "w", encoding="utf-8") as mf:
        for stage in STAGES[: last + 1]:
            start = time.perf_counter()
            ihash = _inputs_hash(ctx, stage, records)
            prev = previous.get(stage)
            sdir = ctx.out / "state" / stage
            reusable = (prev is not None and prev["inputs_hash"] == ihash and (sdir / "scalars.json").exists()
                        and all((ctx.out / f).exists() and file_hash(ctx.out / f) == h
                                for f, h in prev["outputs"].items()))
            seed = cfg.stage_seed(_SEEDED[stage]) if stage in _SEEDED else None
            if reusable:
                ctx.state[stage] = _load_state(sdir)
                rec = StageRecord(stage, ihash, prev["outputs"], time.perf_counter() - start, seed, True)
            else:
                try:
                    files, state = _RUNNERS[stage](ctx)
                except Exception as exc:
                    raise PipelineError(stage, exc) from exc
                _save_state(sdir, state)
                ctx.state[stage] = _load_state(sdir)
                rec = StageRecord(stage, ihash, {f: file_hash(ctx.out / f) for f in files},
                                  time.perf_counter() - start, seed)
            records[stage] = rec
            mf.write(rec.to_json() + "\n")
            mf.flush()
            if log:
                log(f"{stage}: {'reused' if rec.resumed else 'done'} in {rec.wall_time:.2f}s")
    return PipelineResult(0, list(records.values()), ctx.state, ctx.out)
