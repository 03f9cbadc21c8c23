"""Episode-level workflows shared by the command-line driver and library users.

Everything here works on in-memory episodes and fit records; file handling
lives in :mod:`iuhtrack.cli`.
"""

from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .inference import DEFAULT_BOX, ChainConfig, ParamBox, mle_random_search
from .ingest import (
    DataError,
    EpisodeData,
    EpisodeQcPolicy,
    RejectionLog,
    Variable,
    WatershedMeta,
    discharge_to_depth,
    extract_episodes,
    nearest_cell,
    parse_gauge_csv,
)
from .iuh_model import IuhParams, classify
from .metrics import FitRecord, Regression, make_fit_record, regress_f_test
from .synthetic import run_fits

log = logging.getLogger(__name__)


class NumericalError(ArithmeticError):
    """A fit produced non-finite estimates."""


def episode_seed(master_seed: int, watershed_id: str, year: int) -> np.random.SeedSequence:
    """Seed for one episode, independent of processing order and worker count."""
    return np.random.SeedSequence([master_seed, zlib.crc32(watershed_id.encode()), year])


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, np.uint64)[0])


def _mle_task(args) -> IuhParams:
    episode, box, n_draws, seed, horizon = args
    return mle_random_search(episode, box, n_draws, seed, horizon)


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Order-preserving map over a process pool (serial when ``workers`` is 1)."""
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def fit_records(episodes: Sequence[EpisodeData], box: ParamBox = DEFAULT_BOX,
                cfg: ChainConfig = ChainConfig(), *, master_seed: int = 0,
                mle_draws: Optional[int] = None, workers: int = 1) -> list[FitRecord]:
    """Fit every episode and score it, sorted by (watershed, year).

    Args:
        episodes: Episodes to fit, from any number of watersheds.
        box: Prior support.
        cfg: Chain settings; ``cfg.rng_seed`` is ignored in favour of
            per-episode seeds derived from ``master_seed``.
        master_seed: Root of every episode's chain and random-search seed.
        mle_draws: If given, also run the random-search MLE with this many
            draws per episode.
        workers: Worker processes.

    Raises:
        NumericalError: a posterior mean is not finite.
    """
    episodes = sorted(episodes, key=lambda e: (e.watershed.id, e.year))
    seeds = [episode_seed(master_seed, e.watershed.id, e.year).spawn(2) for e in episodes]
    posteriors = run_fits(episodes, box, cfg, [_seed_int(s[0]) for s in seeds], workers)
    mles: list[Optional[IuhParams]] = [None] * len(episodes)
    if mle_draws:
        tasks = [(e, box, mle_draws, _seed_int(s[1]), cfg.horizon) for e, s in zip(episodes, seeds)]
        mles = parallel_map(_mle_task, tasks, workers)
    records = []
    for ep, post, mle in zip(episodes, posteriors, mles):
        if not np.all(np.isfinite(post.mean.as_array())):
            raise NumericalError(f"non-finite posterior mean for {ep.watershed.id} {ep.year}")
        records.append(make_fit_record(ep, post, box, mle=mle, horizon=cfg.horizon))
    return records


# --- ingestion from the CSV layout ---------------------------------------


def load_episodes(metas: Sequence[WatershedMeta], discharge_dir: Path, rainfall_dir: Path,
                  qc: EpisodeQcPolicy = EpisodeQcPolicy(),
                  cells: Optional[Sequence[tuple[str, float, float]]] = None,
                  years: Optional[Sequence[int]] = None) -> tuple[list[EpisodeData], RejectionLog]:
    """Read gauge files for each watershed and extract QC'd episodes.

    Discharge for watershed ``ID`` is ``discharge_dir/ID.csv`` (m^3/s).
    Rainfall is ``rainfall_dir/STATION.csv`` (mm/day), STATION being the
    nearest cell when ``cells`` is given and the watershed id otherwise.
    """
    episodes: list[EpisodeData] = []
    rejections = RejectionLog()
    for meta in sorted(metas, key=lambda m: m.id):
        q_path = Path(discharge_dir) / f"{meta.id}.csv"
        if cells:
            if not (math.isfinite(meta.latitude) and math.isfinite(meta.longitude)):
                raise DataError(f"watershed {meta.id} has no coordinates for cell lookup")
            station = nearest_cell(meta.latitude, meta.longitude, cells)
        else:
            station = meta.id
        p_path = Path(rainfall_dir) / f"{station}.csv"
        for path in (q_path, p_path):
            if not path.exists():
                raise DataError(f"missing gauge file {path}")
        runoff = discharge_to_depth(parse_gauge_csv(q_path, Variable.DISCHARGE), meta)
        rain = parse_gauge_csv(p_path, Variable.RAINFALL)
        eps, rej = extract_episodes(rain, runoff, meta, qc, years)
        episodes.extend(eps)
        rejections.extend(rej)
    return episodes, rejections


# --- tracking ---------------------------------------------------------------


TRACK_COLUMNS = ("watershed", "year", "lam", "k", "theta", "idr", "iuh_type", "total_rain",
                 "total_runoff")


def track_rows(records: Sequence[FitRecord]) -> list[dict]:
    """Per-year parameter series, one row per fitted episode."""
    rows = []
    for r in sorted(records, key=lambda r: (r.watershed, r.year)):
        rows.append({
            "watershed": r.watershed, "year": r.year, "lam": r.bayes.lam, "k": r.bayes.k,
            "theta": r.bayes.theta, "idr": r.idr, "iuh_type": classify(r.bayes).value,
            "total_rain": r.total_rain, "total_runoff": r.total_runoff,
        })
    return rows


@dataclass(frozen=True)
class ChangePoint:
    """Result of the segment-mean scan.

    Attributes:
        split_year: first year of the later segment at the maximal statistic.
        statistic: |mean(before) - mean(after)| / pooled standard deviation.
        scan: (split_year, statistic) for every candidate split.
    """

    split_year: int
    statistic: float
    scan: tuple[tuple[int, float], ...]


def change_point_scan(years: Sequence[int], values: Sequence[float],
                      min_segment: int = 2) -> ChangePoint:
    """Normalized segment-mean difference at every split; the argmax is reported.

    Each candidate split divides the year-ordered series into an earlier and
    a later segment of at least ``min_segment`` values. The statistic is the
    absolute difference of segment means over the pooled standard deviation
    (infinite when both segments are constant but differ). Ties go to the
    earliest split.
    """
    order = np.argsort(years, kind="stable")
    yrs = np.asarray(years)[order]
    x = np.asarray(values, float)[order]
    n = len(x)
    if min_segment < 2 or n < 2 * min_segment:
        raise ValueError(f"need at least {2 * min_segment} values for the scan")
    scan = []
    for s in range(min_segment, n - min_segment + 1):
        a, b = x[:s], x[s:]
        pooled = np.sqrt(((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / (n - 2))
        diff = abs(a.mean() - b.mean())
        if pooled > 0:
            stat = diff / pooled
        else:
            stat = np.inf if diff > 0 else 0.0
        scan.append((int(yrs[s]), float(stat)))
    best = max(range(len(scan)), key=lambda i: (scan[i][1], -i))
    return ChangePoint(scan[best][0], scan[best][1], tuple(scan))


def track_change_points(records: Sequence[FitRecord], min_episodes: int = 8,
                        parameter: str = "k") -> dict[str, Optional[ChangePoint]]:
    """Change-point scan of one parameter per watershed; None where skipped."""
    out: dict[str, Optional[ChangePoint]] = {}
    for ws in sorted({r.watershed for r in records}):
        rows = [r for r in records if r.watershed == ws]
        if len(rows) < min_episodes:
            log.warning("watershed %s: %d episodes (< %d), change-point scan skipped",
                        ws, len(rows), min_episodes)
            out[ws] = None
            continue
        out[ws] = change_point_scan([r.year for r in rows],
                                    [getattr(r.bayes, parameter) for r in rows])
    return out


# --- spatial survey ---------------------------------------------------------


@dataclass(frozen=True)
class SurveyResult:
    """Qualifying watersheds and the size regression.

    Attributes:
        rows: one dict per watershed (qualifying or not) with id, lat, lon,
            area, length scale, episode counts, median IDR and a
            ``qualifies`` flag.
        regression: F-test of median IDR on length scale over qualifying
            watersheds.
    """

    rows: tuple[dict, ...]
    regression: Regression


def survey(records: Sequence[FitRecord], metas: Sequence[WatershedMeta], min_nse: float = 0.2,
           min_episodes: int = 5) -> SurveyResult:
    """Median IDR per watershed against its length scale.

    Episodes are kept when NSE > ``min_nse``; a watershed qualifies with
    strictly more than ``min_episodes`` kept episodes.

    Raises:
        DataError: fewer than three watersheds qualify (no regression).
    """
    rows = []
    for meta in sorted(metas, key=lambda m: m.id):
        mine = [r for r in records if r.watershed == meta.id]
        kept = [r for r in mine if np.isfinite(r.nse) and r.nse > min_nse]
        qualifies = len(kept) > min_episodes
        rows.append({
            "watershed": meta.id, "name": meta.name, "lat": meta.latitude, "lon": meta.longitude,
            "area_km2": meta.drainage_area, "length_scale": meta.length_scale,
            "n_episodes": len(mine), "n_selected": len(kept),
            "median_idr": float(np.median([r.idr for r in kept])) if kept else float("nan"),
            "qualifies": qualifies,
        })
    good = [r for r in rows if r["qualifies"]]
    if len(good) < 3:
        raise DataError(f"{len(good)} qualifying watersheds; the regression needs at least 3")
    reg = regress_f_test([r["length_scale"] for r in good], [r["median_idr"] for r in good])
    return SurveyResult(tuple(rows), reg)
