"""Synthetic rainfall-runoff episodes and the SNR recovery sweep.

Rain occurrence follows a two-state (sunny/rainy) Markov chain; wet-day
depths are bootstrapped from a pool of observed intensities; runoff is the
IUH convolution plus i.i.d. Gaussian noise.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional, Sequence

import numpy as np

from iuhtrack.ingest import EpisodeData, WatershedMeta
from iuhtrack.inference import (
    DEFAULT_BOX,
    ChainConfig,
    ParamBox,
    as_seed_sequence,
    fit_episodes,
)
from iuhtrack.iuh_model import DailySeries, IuhParams, Quantity, convolve, gamma_kernel
from iuhtrack import metrics
from iuhtrack.metrics import FitRecord

SUMMER_DAYS = 92
TRUTH_EDGE_MARGIN = 0.05  # fraction of box width kept clear of k = 0 and theta = 0
SYNTHETIC_WATERSHED = WatershedMeta(id="synthetic", drainage_area=324.0, name="synthetic")


class FlatSignalError(ValueError):
    """Noise-free runoff has zero spread, so a target SNR cannot be met."""


@dataclass(frozen=True)
class OccurrenceModel:
    p_rain_given_sunny: float = 0.34
    p_rain_given_rainy: float = 0.49
    p_rain_initial: float = 0.49

    def __post_init__(self):
        for name in ("p_rain_given_sunny", "p_rain_given_rainy", "p_rain_initial"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")

    @property
    def stationary_wet_fraction(self) -> float:
        p_sr = self.p_rain_given_sunny
        p_rs = 1 - self.p_rain_given_rainy
        return p_sr / (p_sr + p_rs) if p_sr + p_rs > 0 else self.p_rain_initial


@dataclass(frozen=True)
class IntensityPool:
    intensities: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.intensities)
        if not values:
            raise ValueError("intensity pool is empty")
        if min(values) <= 0:
            raise ValueError("pool intensities must be positive")
        object.__setattr__(self, "intensities", values)

    @classmethod
    def from_series(cls, rain: Sequence[float]) -> "IntensityPool":
        """Harvest wet-day depths (> 0) from a historical rainfall series."""
        return cls(tuple(v for v in rain if v is not None and v > 0))


@dataclass(frozen=True)
class NoiseSpec:
    target_snr: Optional[float] = None
    sigma: Optional[float] = None

    def __post_init__(self):
        if (self.target_snr is None) == (self.sigma is None):
            raise ValueError("set exactly one of target_snr and sigma")
        if self.target_snr is not None and not self.target_snr > 0:
            raise ValueError("target_snr must be positive")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def default_pool() -> IntensityPool:
    """Bundled pool of summer wet-day rainfall depths, mm/day."""
    text = resources.files("iuhtrack").joinpath("data/intensity_pool.csv").read_text()
    lines = [ln for ln in text.splitlines()[1:] if ln.strip()]
    return IntensityPool(tuple(float(ln) for ln in lines))


def gen_occurrence(model: OccurrenceModel, n_days: int = SUMMER_DAYS, rng_seed=0) -> np.ndarray:
    """Boolean wet-day indicators from the two-state Markov chain."""
    if n_days < 1:
        raise ValueError("n_days must be at least 1")
    u = np.random.default_rng(rng_seed).random(n_days)
    wet = np.empty(n_days, dtype=bool)
    wet[0] = u[0] < model.p_rain_initial
    p_wet = (model.p_rain_given_sunny, model.p_rain_given_rainy)
    for t in range(1, n_days):
        wet[t] = u[t] < p_wet[int(wet[t - 1])]
    return wet


def gen_rainfall(occurrence: Sequence[bool], pool: IntensityPool, rng_seed=0,
                 start_date: dt.date = dt.date(2000, 6, 1)) -> DailySeries:
    occurrence = np.asarray(occurrence, dtype=bool)
    draws = np.random.default_rng(rng_seed).choice(np.array(pool.intensities), size=len(occurrence))
    return DailySeries(start_date, np.where(occurrence, draws, 0.0), Quantity.RAINFALL)


def gen_episode(truth: IuhParams, occ: OccurrenceModel, pool: IntensityPool, noise: NoiseSpec,
                n_days: int = SUMMER_DAYS, rng_seed=0, *, year: int = 2000,
                watershed: WatershedMeta = SYNTHETIC_WATERSHED,
                horizon: int = 14) -> tuple[EpisodeData, float]:
    """Generate one noisy synthetic episode.

    With ``noise.target_snr`` the noise standard deviation is the standard
    deviation of the noise-free runoff divided by the target. Negative noisy
    runoff is kept as is.

    Returns:
        The episode (carrying ``truth``) and the noise standard deviation used.

    Raises:
        FlatSignalError: If a target SNR is requested for constant runoff.
    """
    occ_seed, rain_seed, noise_seed = as_seed_sequence(rng_seed).spawn(3)
    wet = gen_occurrence(occ, n_days, occ_seed)
    rain = gen_rainfall(wet, pool, rain_seed, dt.date(year, 6, 1))
    clean = convolve(rain, gamma_kernel(truth, horizon)).values
    if noise.target_snr is not None:
        spread = float(np.std(clean))
        if spread == 0:
            raise FlatSignalError("flat signal, SNR undefined")
        sigma = spread / noise.target_snr
    else:
        sigma = float(noise.sigma)
    noisy = clean + np.random.default_rng(noise_seed).normal(0.0, 1.0, n_days) * sigma
    episode = EpisodeData(
        watershed=watershed,
        year=year,
        rain=rain,
        runoff=DailySeries(rain.start_date, noisy, Quantity.RUNOFF),
        extension_days=0,
        truth=truth,
    )
    return episode, sigma


def truth_sampler(box: ParamBox = DEFAULT_BOX,
                  margin: float = TRUTH_EDGE_MARGIN) -> Callable[[np.random.Generator], IuhParams]:
    """Uniform truths on the box, keeping ``margin`` of the width clear of k and theta lower edges."""
    lo = box.lo + np.array([0.0, margin, margin]) * box.width
    hi = box.hi

    def draw(rng: np.random.Generator) -> IuhParams:
        return IuhParams.from_array(rng.uniform(lo, hi))

    draw.margin = margin
    return draw


def sweep_seed(master_seed: int, snr_index: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, snr_index, rep])


def snr_sweep(truths: Callable[[np.random.Generator], IuhParams], snr_grid: Sequence[float],
              reps: int, cfg: ChainConfig = ChainConfig(), *, box: ParamBox = DEFAULT_BOX,
              occ: OccurrenceModel = OccurrenceModel(), pool: Optional[IntensityPool] = None,
              n_days: int = SUMMER_DAYS, master_seed: int = 0,
              workers: int = 1) -> list[FitRecord]:
    """Recover random truths from synthetic episodes at each target SNR.

    Every (SNR, repetition) cell derives its own seed from
    ``(master_seed, snr_index, rep)``, so the table does not depend on
    scheduling. Each record carries the relative errors of both the grid
    initialization and the posterior mean.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    pool = pool or default_pool()
    episodes, seeds, targets = [], [], []
    for i, snr in enumerate(snr_grid):
        for rep in range(reps):
            truth_seed, episode_seed, chain_seed = sweep_seed(master_seed, i, rep).spawn(3)
            truth = truths(np.random.default_rng(truth_seed))
            ep, _ = gen_episode(truth, occ, pool, NoiseSpec(target_snr=snr), n_days, episode_seed,
                                year=rep + 1)  # year column carries the 1-based rep
            episodes.append(ep)
            seeds.append(int(chain_seed.generate_state(1, np.uint64)[0]))
            targets.append(float(snr))

    posteriors = run_fits(episodes, box, cfg, seeds, workers)
    records = []
    for ep, post, snr in zip(episodes, posteriors, targets):
        records.append(metrics.make_fit_record(ep, post, box, horizon=cfg.horizon, snr_target=snr))
    return records


def run_fits(episodes, box, cfg, seeds, workers: int = 1):
    """fit_episodes spread over a process pool; output order follows the input."""
    if workers <= 1 or len(episodes) < 2:
        return fit_episodes(episodes, box, cfg, seeds)
    from concurrent.futures import ProcessPoolExecutor

    n_chunks = min(workers, len(episodes))
    bounds = np.linspace(0, len(episodes), n_chunks + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(fit_episodes, episodes[a:b], box, cfg, seeds[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])
        ]
        out = []
        for fut in futures:
            out.extend(fut.result())
    return out


def sweep_percentiles(records: Sequence[FitRecord]) -> dict:
    """25th/50th/75th percentile relative errors per target SNR, grid init and MCMC."""
    out = {}
    names = ("lam", "k", "theta")
    for snr in sorted({r.snr_target for r in records}):
        rows = [r for r in records if r.snr_target == snr]
        entry = {"n": len(rows)}
        for method, attr in (("grid_init", "rel_err_grid"), ("mcmc", "rel_err_bayes")):
            errs = np.array([getattr(r, attr) for r in rows])
            p25, p50, p75 = np.percentile(errs, [25, 50, 75], axis=0)
            entry[method] = {
                name: {"p25": float(p25[j]), "p50": float(p50[j]), "p75": float(p75[j])}
                for j, name in enumerate(names)
            }
        out[repr(float(snr))] = entry
    return out
