"""Command-line front end.

Stage subcommands (``ingest`` .. ``simulate``) run the pipeline up to that
stage, reusing earlier outputs in the output directory when their inputs are
unchanged.  ``kst``, ``pcf``, ``autocov`` and ``mctest`` compute one summary
on top of the fitted first-order terms; ``xk``, ``envelope`` and
``grf-sample`` are standalone diagnostics.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import export
from .config import ConfigError, load_config
from .core import GridSpec, ObservationWindow, PatternError, Raster, load_point_pattern, load_window
from .covfit import CovarianceParams
from .grf import circulant_eigenvalues, extend_grid, sample_grf
from .pipeline import STAGES, PipelineContext, PipelineError, run_pipeline
from .simulate import simulate_poisson_from_raster
from .summary import (bivariate_K, empirical_autocov, envelope, separable_plugin_intensity, spacetime_mc_test,
                      spatial_inhom_K, st_inhom_K, stoyan_bandwidth, time_averaged_pcf)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--out", help="output directory (overrides paths.out)")
    p.add_argument("--seed", type=int, help="root seed (overrides seed)")
    p.add_argument("--threads", type=int, help="worker threads for replicate loops")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pattern", help="event CSV with header x,y,t (overrides paths.pattern)")
    p.add_argument("--window", help="polygon vertex CSV (overrides paths.window)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stlgcp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES + ("pipeline",):
        p = sub.add_parser(name, help="run every stage" if name == "pipeline"
                           else f"run the pipeline through '{name}'")
        _common(p)
        _data_flags(p)
        p.add_argument("--fresh", action="store_true", help="recompute every stage instead of resuming")
        if name == "bandwidth":
            p.add_argument("--K", type=int)
            p.add_argument("--epsilon", type=float)
    for name in ("kst", "pcf", "autocov", "mctest"):
        p = sub.add_parser(name, help=f"compute the {name} summary")
        _common(p)
        _data_flags(p)
    p = sub.add_parser("xk", help="cross K-functions of two patterns")
    _common(p)
    p.add_argument("--pattern1", required=True)
    p.add_argument("--pattern2", required=True)
    p.add_argument("--window", required=True)
    p.add_argument("--r-max", type=float)
    p.add_argument("--n-r", type=int, default=20)
    p = sub.add_parser("envelope", help="max-min envelope of the inhomogeneous K under a raster intensity")
    _common(p)
    p.add_argument("--pattern", required=True, help="observed pattern CSV (x,y,t)")
    p.add_argument("--window", required=True)
    p.add_argument("--raster", required=True, help="intensity as ESRI ASCII grid")
    p.add_argument("--n-sim", type=int, default=200)
    p.add_argument("--r-max", type=float)
    p.add_argument("--n-r", type=int, default=20)
    p = sub.add_parser("grf-sample", help="draw one Gaussian field on the base lattice")
    _common(p)
    p.add_argument("--window", required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--p", type=int, default=128)
    return ap


def _config(args, validate=True):
    cfg = load_config(args.config, validate=False, seed=args.seed, threads=args.threads, out=args.out)
    if getattr(args, "pattern", None):
        cfg.paths.pattern = args.pattern
    if getattr(args, "window", None):
        cfg.paths.window = args.window
    if getattr(args, "K", None) is not None:
        cfg.bandwidth.K = args.K
    if getattr(args, "epsilon", None) is not None:
        cfg.bandwidth.epsilon = args.epsilon
    if validate:
        cfg.validate()
    return cfg


def _r_grid(window: ObservationWindow, r_max, n_r):
    x0, y0, x1, y1 = window.bbox
    r_max = r_max or 0.125 * min(x1 - x0, y1 - y0)
    return np.linspace(r_max / n_r, r_max, n_r)


def _summary(args, name: str) -> Path:
    cfg = _config(args)
    res = run_pipeline(cfg, resume=True, stages=["glm-fit"])
    st = res.state
    ctx = PipelineContext(cfg)
    ctx.state = st
    train, dens, lam1, s = ctx.training(), ctx.density(), st["glm-fit"]["lambda1"], cfg.summaries
    r_grid = ctx.r_grid()
    t_grid = np.arange(1, min(s.t_max, len(train.days) - 1) + 1, dtype=float)
    plug = separable_plugin_intensity(dens, train.t, s.h_t)
    path = ctx.out / f"{name}.csv"
    if name == "kst":
        export.write_surface(path, r_grid, t_grid, st_inhom_K(train, plug, r_grid, t_grid).values)
    elif name == "pcf":
        h_s = stoyan_bandwidth(train.n / (len(train.days) * ctx.window.area), s.stoyan_c)
        u_max = s.u_max or r_grid[-1]
        u = np.linspace(u_max / s.n_u, u_max, s.n_u)
        export.write_curve(path, "u", u, time_averaged_pcf(train, dens, lam1, u, h_s).values)
    elif name == "autocov":
        counts = np.bincount(train.t - train.days[0], minlength=len(train.days))
        ac = empirical_autocov(counts, lam1, min(s.v_max, len(train.days) - 1))
        export.write_curve(path, "v", ac.v_grid, ac.values)
    else:
        mc = spacetime_mc_test(train, plug, s.n_perm, r_grid, t_grid, seed=cfg.stage_seed("summaries"),
                               n_jobs=cfg.threads)
        export.write_rows(path, ["n_perm", "observed", "fraction_below"], [(s.n_perm, mc.observed, mc.fraction_below)])
        print(f"fraction below observed: {mc.fraction_below:.4f}")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in STAGES or args.command == "pipeline":
            cfg = _config(args)
            stages = None if args.command == "pipeline" else [args.command]
            res = run_pipeline(cfg, resume=not args.fresh, stages=stages,
                               log=lambda msg: print(msg, file=sys.stderr))
            if args.command == "bandwidth":
                print(repr(float(res.state["bandwidth"]["h"])))
            return res.status
        if args.command in ("kst", "pcf", "autocov", "mctest"):
            print(_summary(args, args.command))
            return 0
        out = _out_dir(args)
        if args.command == "xk":
            window = load_window(args.window)
            p1, _ = load_point_pattern(args.pattern1, window)
            p2, _ = load_point_pattern(args.pattern2, window)
            r = _r_grid(window, args.r_max, args.n_r)
            k12, k21, k0 = bivariate_K(p1.xy, p2.xy, window, r)
            export.write_rows(out / "xk.csv", ["r", "K12", "K21", "K0"], zip(r, k12, k21, k0))
        elif args.command == "envelope":
            window = load_window(args.window)
            header, vals = export.read_esri_ascii(args.raster)
            dx = header.get("cellsize", header.get("dx"))
            dy = header.get("cellsize", header.get("dy"))
            grid = GridSpec(header["xllcorner"], header["yllcorner"], dx, dy, vals.shape[0], vals.shape[1],
                            np.isfinite(vals))
            raster = Raster(grid, np.nan_to_num(vals))
            obs, _ = load_point_pattern(args.pattern, window)
            r = _r_grid(window, args.r_max, args.n_r)

            def stat(xy):
                return spatial_inhom_K(xy, window, raster.at(xy), r) if len(xy) else np.zeros(len(r))

            seed = args.seed if args.seed is not None else 0
            env = envelope(lambda g: simulate_poisson_from_raster(raster, g, window), stat, args.n_sim, seed,
                           n_jobs=args.threads or 1)
            k = stat(obs.xy)
            export.write_rows(out / "envelope.csv", ["r", "observed", "lo", "hi", "inside"],
                              zip(r, k, env.lo, env.hi, env.contains(k).astype(int)))
        elif args.command == "grf-sample":
            window = load_window(args.window)
            grid = GridSpec.from_window(window, args.m, args.p)
            spec = circulant_eigenvalues(extend_grid(grid), CovarianceParams(args.sigma2, args.phi))
            field = sample_grf(spec, rng=np.random.default_rng(args.seed))
            export.write_raster_csv(Raster(grid, field.base, units="field"), out / "grf_sample.csv")
        return 0
    except (ConfigError, PatternError, PipelineError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
