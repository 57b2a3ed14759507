"""Poisson log-linear model for the daily expected event count, fitted by IRLS."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

TAU = 2.0 * np.pi / 365.0
WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
SEASONS = ("Spring", "Summer", "Fall", "Winter")
_MONTH_SEASON = {3: "Spring", 4: "Spring", 5: "Spring", 6: "Summer", 7: "Summer", 8: "Summer",
                 9: "Fall", 10: "Fall", 11: "Winter", 12: "Winter", 1: "Winter", 2: "Winter"}
DEFAULT_ORIGIN = dt.date(2014, 1, 1)
DEFAULT_REFERENCE_SEASONS = frozenset({"Spring", "Winter"})


class RankError(ValueError):
    def __init__(self, columns):
        super().__init__(f"design matrix is rank deficient; offending columns: {', '.join(columns)}")
        self.columns = list(columns)


class GlmConvergenceError(RuntimeError):
    def __init__(self, message, coefficients):
        super().__init__(message)
        self.coefficients = coefficients


def season_of(date: dt.date) -> str:
    return _MONTH_SEASON[date.month]


@dataclass(frozen=True)
class DesignSpec:
    """Which calendar covariates enter the linear predictor.

    Day ``t`` maps to ``origin + (t - 1)`` days.  By default there is no
    intercept, all seven weekday indicators are kept and Spring/Winter are
    the dropped season levels.
    """

    origin: dt.date = DEFAULT_ORIGIN
    reference_seasons: frozenset = DEFAULT_REFERENCE_SEASONS
    intercept: bool = False
    weekdays: bool = True
    seasons: bool = True
    harmonics: bool = True
    trend: bool = True

    def __post_init__(self):
        object.__setattr__(self, "reference_seasons", frozenset(self.reference_seasons))
        unknown = set(self.reference_seasons) - set(SEASONS)
        if unknown:
            raise ValueError(f"unknown seasons: {sorted(unknown)}")

    @property
    def labels(self) -> list[str]:
        out = []
        if self.intercept:
            out.append("(Intercept)")
        if self.weekdays:
            out.extend(WEEKDAYS)
        if self.seasons:
            out.extend(s for s in SEASONS if s not in self.reference_seasons)
        if self.harmonics:
            out.extend(["Cos(wt)", "Sin(wt)", "Cos(2wt)", "Sin(2wt)"])
        if self.trend:
            out.append("time")
        return out

    def rows(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = []
        if self.intercept:
            cols.append(np.ones_like(t))
        dates = [self.origin + dt.timedelta(days=int(round(v)) - 1) for v in t]
        if self.weekdays:
            wd = np.array([d.isoweekday() for d in dates])  # Monday=1 .. Sunday=7
            cols.extend((wd == i).astype(float) for i in range(1, 8))
        if self.seasons:
            sn = np.array([season_of(d) for d in dates])
            cols.extend((sn == s).astype(float) for s in SEASONS if s not in self.reference_seasons)
        if self.harmonics:
            cols.extend([np.cos(TAU * t), np.sin(TAU * t), np.cos(2 * TAU * t), np.sin(2 * TAU * t)])
        if self.trend:
            cols.append(t.copy())
        if not cols:
            raise ValueError("design has no columns")
        return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    days: np.ndarray
    X: np.ndarray
    labels: list
    spec: DesignSpec


def _offending_columns(X: np.ndarray, labels) -> list[str]:
    bad, kept = [], []
    for k in range(X.shape[1]):
        trial = X[:, kept + [k]]
        if np.linalg.matrix_rank(trial) < len(kept) + 1:
            bad.append(labels[k])
        else:
            kept.append(k)
    return bad


def check_rank(X: np.ndarray, labels) -> None:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankError(_offending_columns(X, labels))


def build_design(t_range, calendar_origin: dt.date = DEFAULT_ORIGIN,
                 reference_seasons=DEFAULT_REFERENCE_SEASONS, **terms) -> DesignMatrix:
    """One row per day ``T0..T1`` of calendar covariates; raises :class:`RankError`."""
    T0, T1 = int(t_range[0]), int(t_range[1])
    if T1 < T0:
        raise ValueError("empty t_range")
    spec = DesignSpec(origin=calendar_origin, reference_seasons=reference_seasons, **terms)
    days = np.arange(T0, T1 + 1)
    X = spec.rows(days)
    check_rank(X, spec.labels)
    return DesignMatrix(days, X, spec.labels, spec)


@dataclass(frozen=True, eq=False)
class TemporalGlmFit:
    labels: list
    coefficients: np.ndarray
    std_errors: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    null_deviance: float
    null_df: int
    residual_deviance: float
    residual_df: int
    aic: float
    median_deviance_residual: float
    fitted: np.ndarray
    days: np.ndarray
    n_iter: int
    deviance_history: tuple = field(repr=False)
    spec: DesignSpec | None = None

    def table(self) -> list[dict]:
        return [dict(variable=l, estimate=float(b), std_error=float(s), z_value=float(z), p_value=float(p))
                for l, b, s, z, p in zip(self.labels, self.coefficients, self.std_errors,
                                          self.z_values, self.p_values)]


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    return float(np.sum(_unit_deviance(y, mu)))


def _unit_deviance(y, mu):
    y = np.asarray(y, dtype=float)
    ylogy = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / mu), 0.0)
    return 2.0 * (ylogy - (y - mu))


def irls_fit(X, y, tol: float = 1e-8, max_iter: int = 100, labels=None) -> TemporalGlmFit:
    """Poisson GLM with log link by iteratively reweighted least squares.

    Step-halving keeps the deviance non-increasing.  Converges when the
    largest coefficient change or the score norm drops below ``tol``.
    """
    design = X if isinstance(X, DesignMatrix) else None
    Xm = np.asarray(design.X if design else X, dtype=float)
    if Xm.ndim == 1:
        Xm = Xm[:, None]
    labels = list(design.labels if design else (labels or [f"x{k}" for k in range(Xm.shape[1])]))
    y = np.asarray(y, dtype=float)
    if y.shape != (Xm.shape[0],):
        raise ValueError("y length must match the number of design rows")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("y must be non-negative integer counts")
    check_rank(Xm, labels)
    n, k = Xm.shape

    mu = y + 0.1
    eta = np.log(mu)
    beta = None
    dev_prev = np.inf
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = mu
        z = eta + (y - mu) / mu
        sw = np.sqrt(w)
        beta_new, *_ = np.linalg.lstsq(Xm * sw[:, None], z * sw, rcond=None)
        eta_new = Xm @ beta_new
        mu_new = np.exp(eta_new)
        dev = poisson_deviance(y, mu_new)
        if beta is not None:
            halvings = 0
            while not (np.isfinite(dev) and dev <= dev_prev + 1e-10 * max(1.0, abs(dev_prev))):
                halvings += 1
                if halvings > 50:
                    raise GlmConvergenceError("step-halving failed to reduce deviance", beta)
                beta_new = 0.5 * (beta_new + beta)
                eta_new = Xm @ beta_new
                mu_new = np.exp(eta_new)
                dev = poisson_deviance(y, mu_new)
        delta = np.inf if beta is None else float(np.max(np.abs(beta_new - beta)))
        beta, eta, mu = beta_new, eta_new, mu_new
        history.append(dev)
        score = Xm.T @ (y - mu)
        if delta < tol or (beta is not None and it > 1 and np.linalg.norm(score) < tol):
            converged = True
            break
        dev_prev = dev
    if not converged:
        raise GlmConvergenceError(f"IRLS did not converge in {max_iter} iterations", beta)

    info = Xm.T @ (Xm * mu[:, None])
    cov = np.linalg.inv(info)
    se = np.sqrt(np.diag(cov))
    zval = beta / se
    pval = 2.0 * stats.norm.sf(np.abs(zval))

    has_intercept = bool(np.any(np.all(Xm == Xm[:1], axis=0) & (Xm[0] != 0)))
    if has_intercept:
        null_mu, null_df = np.full(n, y.mean()), n - 1
    else:
        null_mu, null_df = np.ones(n), n
    loglik = float(np.sum(y * eta - mu - special.gammaln(y + 1)))
    dres = np.sign(y - mu) * np.sqrt(np.maximum(_unit_deviance(y, mu), 0.0))
    return TemporalGlmFit(
        labels=labels, coefficients=beta, std_errors=se, z_values=zval, p_values=pval,
        null_deviance=poisson_deviance(y, null_mu), null_df=null_df,
        residual_deviance=history[-1], residual_df=n - k, aic=-2.0 * loglik + 2 * k,
        median_deviance_residual=float(np.median(dres)), fitted=mu,
        days=design.days if design else np.arange(n), n_iter=it,
        deviance_history=tuple(history), spec=design.spec if design else None)


def predict_lambda1(fit: TemporalGlmFit, t) -> np.ndarray:
    """``exp(x_t' beta)``; extrapolates beyond the training range."""
    if fit.spec is None:
        raise ValueError("fit was not built from a DesignMatrix; cannot rebuild covariates")
    scalar = np.ndim(t) == 0
    out = np.exp(fit.spec.rows(t) @ fit.coefficients)
    return float(out[0]) if scalar else out


def write_coefficient_table(fit: TemporalGlmFit, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "estimate", "std_error", "z_value", "p_value"])
        for row in fit.table():
            w.writerow([row["variable"]] + [repr(row[c]) for c in ("estimate", "std_error", "z_value", "p_value")])


def write_deviance_summary(fit: TemporalGlmFit, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "value", "df"])
        w.writerow(["median_deviance_residual", repr(fit.median_deviance_residual), ""])
        w.writerow(["null_deviance", repr(fit.null_deviance), fit.null_df])
        w.writerow(["residual_deviance", repr(fit.residual_deviance), fit.residual_df])
        w.writerow(["aic", repr(fit.aic), ""])
