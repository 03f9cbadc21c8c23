"""Skill metrics, regression tests and the per-episode result record."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from iuhtrack.iuh_model import IuhParams, classify, convolve, gamma_kernel, idr

PARAM_NAMES = ("lam", "k", "theta")


def _as_float_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def relative_error(est: IuhParams, truth: IuhParams, box) -> tuple[float, float, float]:
    """Absolute error of each parameter as a fraction of its box width."""
    err = np.abs(est.as_array() - truth.as_array()) / box.width
    return tuple(float(e) for e in err)


def cc(a, b) -> float:
    """Pearson correlation; NaN when either series is constant."""
    a, b = _as_float_array(a), _as_float_array(b)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("cc needs two equal-length series of length >= 2")
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0:
        return float("nan")
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def nse(obs, sim) -> float:
    """Nash-Sutcliffe efficiency; NaN for constant observations."""
    obs, sim = _as_float_array(obs), _as_float_array(sim)
    if obs.shape != sim.shape:
        raise ValueError("obs and sim must have equal length")
    denom = float(np.sum((obs - obs.mean()) ** 2))
    if denom == 0:
        return float("nan")
    return 1.0 - float(np.sum((obs - sim) ** 2)) / denom


def snr_observed(runoff, residuals) -> float:
    """Standard deviation of runoff over that of the fit residuals; +inf for a perfect fit."""
    resid_sd = float(np.std(_as_float_array(residuals)))
    if resid_sd == 0:
        return float("inf")
    return float(np.std(_as_float_array(runoff))) / resid_sd


def runoff_coefficient(rain, runoff) -> float:
    total_rain = float(np.sum(rain))
    if not total_rain > 0:
        raise ValueError("total rainfall must be positive")
    return float(np.sum(runoff)) / total_rain


def r2_identity(x, y) -> float:
    """Coefficient of determination of ``y`` about the 1:1 line ``y = x`` (no fitted slope)."""
    x, y = _as_float_array(x), _as_float_array(y)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("r2_identity needs two equal-length sequences of length >= 2")
    denom = float(np.sum((y - y.mean()) ** 2))
    if denom == 0:
        return float("nan")
    return 1.0 - float(np.sum((y - x) ** 2)) / denom


@dataclass(frozen=True)
class Regression:
    slope: float
    intercept: float
    f_statistic: float
    one_tailed_p: float
    n: int


def regress_f_test(x, y) -> Regression:
    """Ordinary least squares with an F test of the slope on (1, n - 2) degrees of freedom.

    ``one_tailed_p`` is the upper tail of the F distribution at the observed
    statistic.
    """
    x, y = _as_float_array(x), _as_float_array(y)
    n = x.size
    if n < 3 or y.size != n:
        raise ValueError("regression needs at least 3 paired points")
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0:
        raise ValueError("x is constant")
    slope = float(np.sum((x - x.mean()) * (y - y.mean()))) / sxx
    intercept = float(y.mean() - slope * x.mean())
    fitted = intercept + slope * x
    ss_model = float(np.sum((fitted - y.mean()) ** 2))
    ss_resid = float(np.sum((y - fitted) ** 2))
    if ss_resid == 0:
        f_stat = float("inf") if ss_model > 0 else 0.0
        p = 0.0 if ss_model > 0 else 1.0
    else:
        f_stat = ss_model / (ss_resid / (n - 2))
        p = float(stats.f.sf(f_stat, 1, n - 2))
    return Regression(slope, intercept, f_stat, p, n)


def ecdf(values) -> list[tuple[float, float]]:
    """Right-continuous empirical CDF as ``(value, fraction <= value)`` at each distinct value."""
    values = np.sort(_as_float_array(values))
    if values.size == 0:
        raise ValueError("ecdf of an empty sequence")
    uniq, counts = np.unique(values, return_counts=True)
    cum = np.cumsum(counts) / values.size
    return [(float(v), float(c)) for v, c in zip(uniq, cum)]


def reference_snr(records: Sequence["FitRecord"]) -> float:
    """Smallest observed SNR among fitted episodes."""
    vals = [r.snr_observed for r in records if not math.isnan(r.snr_observed)]
    if not vals:
        raise ValueError("no finite SNR values")
    return float(min(vals))


@dataclass(frozen=True)
class FitRecord:
    watershed: str
    year: int
    bayes: IuhParams
    grid_init: IuhParams
    sigma2: float
    cc: float
    nse: float
    snr_observed: float
    runoff_coefficient: float
    idr: float
    iuh_type: str
    acceptance_rate: float
    n_days: int
    extension_days: int = 0
    total_rain: float = float("nan")
    total_runoff: float = float("nan")
    mle: Optional[IuhParams] = None
    cc_mle: float = float("nan")
    nse_mle: float = float("nan")
    truth: Optional[IuhParams] = None
    rel_err_bayes: Optional[tuple[float, float, float]] = None
    rel_err_grid: Optional[tuple[float, float, float]] = None
    rel_err_mle: Optional[tuple[float, float, float]] = None
    snr_target: Optional[float] = None
    snr_noisy: Optional[float] = None
    sigma2_history: tuple[float, ...] = ()

    def to_row(self) -> dict:
        row = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "sigma2_history":
                row[f.name] = ";".join(repr(v) for v in value)
            elif f.name in ("bayes", "grid_init", "mle", "truth"):
                for name in PARAM_NAMES:
                    row[f"{f.name}_{name}"] = getattr(value, name) if value is not None else None
            elif f.name.startswith("rel_err"):
                for j, name in enumerate(PARAM_NAMES):
                    row[f"{f.name}_{name}"] = value[j] if value is not None else None
            else:
                row[f.name] = value
        return row


def make_fit_record(episode, posterior, box, mle: Optional[IuhParams] = None,
                    horizon: int = 14, snr_target: Optional[float] = None) -> FitRecord:
    """Score one fitted episode: skill of the posterior-mean simulation, SNR, IDR and errors."""
    rain = episode.rain
    obs = episode.runoff.values
    sim = convolve(rain, gamma_kernel(posterior.mean, horizon)).values
    resid = obs - sim
    cc_mle = nse_mle = float("nan")
    if mle is not None:
        sim_mle = convolve(rain, gamma_kernel(mle, horizon)).values
        cc_mle, nse_mle = cc(obs, sim_mle), nse(obs, sim_mle)

    truth = episode.truth
    rel_bayes = rel_grid = rel_mle = None
    snr_noisy = None
    if truth is not None:
        rel_bayes = relative_error(posterior.mean, truth, box)
        rel_grid = relative_error(posterior.init, truth, box)
        if mle is not None:
            rel_mle = relative_error(mle, truth, box)
        clean = convolve(rain, gamma_kernel(truth, horizon)).values
        noise_sd = float(np.std(obs - clean))
        snr_noisy = float(np.std(obs)) / noise_sd if noise_sd > 0 else float("inf")

    total_rain = float(np.sum(rain.values))
    return FitRecord(
        watershed=episode.watershed.id,
        year=episode.year,
        bayes=posterior.mean,
        grid_init=posterior.init,
        sigma2=posterior.sigma2,
        cc=cc(obs, sim),
        nse=nse(obs, sim),
        snr_observed=snr_observed(obs, resid),
        runoff_coefficient=runoff_coefficient(rain.values, obs) if total_rain > 0 else float("nan"),
        idr=idr(posterior.mean),
        iuh_type=classify(posterior.mean).value,
        acceptance_rate=posterior.acceptance_rate,
        n_days=episode.n_days,
        extension_days=episode.extension_days,
        total_rain=total_rain,
        total_runoff=float(np.sum(obs)),
        mle=mle,
        cc_mle=cc_mle,
        nse_mle=nse_mle,
        truth=truth,
        rel_err_bayes=rel_bayes,
        rel_err_grid=rel_grid,
        rel_err_mle=rel_mle,
        snr_target=snr_target,
        snr_noisy=snr_noisy,
        sigma2_history=posterior.sigma2_history,
    )
