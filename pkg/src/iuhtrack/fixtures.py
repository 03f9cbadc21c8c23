"""Desk-scale input fixtures in the gauge CSV layout.

Two data sets are generated from known truths so the full pipeline can be
exercised without network access:

* ``fit/`` - one watershed (Fall Creek-like, 324 km^2), 14 summers
  (1990-2003). Three summers are spoiled on purpose: a missing discharge
  value (1994), a sustained storm across the season start (1997) and a
  missing rainfall value (1999); 1995 is wet at the season start on its
  own. That leaves 10 usable episodes.
* ``survey/`` - nine watersheds on a rainfall grid. Eight have seven summers
  each and a shape parameter rising with length scale; the ninth has only
  five summers and so never qualifies.

Records cover May 1 - September 30 so episode extension has room. Runoff
is the IUH convolution of the whole season plus Gaussian noise at a target
SNR, converted to discharge and floored at zero (a gauge cannot report
negative flow). ``truth.csv`` files hold the generating parameters.
"""

from __future__ import annotations

import datetime as dt
import json
from pathlib import Path

import numpy as np

from .ingest import nearest_cell, write_gauge_csv
from .iuh_model import DailySeries, IuhParams, Quantity, convolve, gamma_kernel
from .synthetic import OccurrenceModel, default_pool, gen_occurrence, gen_rainfall

SEASON_START = (5, 1)
SEASON_DAYS = 153  # May 1 - Sep 30
FIT_WATERSHED = ("04234000", "Fall Creek near Ithaca", 42.453, -76.473, 324.0)
FIT_YEARS = range(1990, 2004)
SURVEY_YEARS = range(2001, 2008)
SURVEY_LENGTHS = np.linspace(5.0, 30.0, 8)  # km, length scale = sqrt(area)


def survey_truth(length_scale: float) -> IuhParams:
    """Generating parameters of the survey cohort: k rises linearly with size."""
    return IuhParams(0.3, 0.8 + 0.05 * length_scale, 2.0)


def _season(year: int) -> list[dt.date]:
    start = dt.date(year, *SEASON_START)
    return [start + dt.timedelta(days=i) for i in range(SEASON_DAYS)]


def _season_rain(seed: np.random.SeedSequence, year: int) -> np.ndarray:
    occ_seed, depth_seed = seed.spawn(2)
    wet = gen_occurrence(OccurrenceModel(), SEASON_DAYS, occ_seed)
    return gen_rainfall(wet, default_pool(), depth_seed, dt.date(year, *SEASON_START)).values


def _season_discharge(rain: np.ndarray, truth: IuhParams, snr: float, area: float,
                      seed: np.random.SeedSequence, year: int) -> np.ndarray:
    series = DailySeries(dt.date(year, *SEASON_START), rain, Quantity.RAINFALL)
    clean = convolve(series, gamma_kernel(truth)).values
    sigma = float(np.std(clean)) / snr
    depth = clean + np.random.default_rng(seed).normal(0.0, sigma, len(clean))
    return np.round(np.maximum(depth, 0.0) * area / 86.4, 4)


def _write_truth(path: Path, rows: list[tuple]) -> None:
    with open(path, "w") as fh:
        fh.write("watershed,year,lam,k,theta\n")
        for ws, year, p in rows:
            fh.write(f"{ws},{year},{p.lam!r},{p.k!r},{p.theta!r}\n")


def _write_config(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def make_fit_fixture(root: Path, seed: int = 0) -> None:
    ws, name, lat, lon, area = FIT_WATERSHED
    root.mkdir(parents=True, exist_ok=True)
    (root / "discharge").mkdir(exist_ok=True)
    (root / "rainfall").mkdir(exist_ok=True)
    (root / "watersheds.csv").write_text(f"id,name,lat,lon,area_km2\n{ws},{name},{lat},{lon},{area}\n")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    dates, rain_all, q_all, truths = [], [], [], []
    for year in FIT_YEARS:
        truth = IuhParams(float(rng.uniform(0.15, 0.5)), float(rng.uniform(1.0, 4.0)),
                          float(rng.uniform(0.5, 2.5)))
        rain_seed, noise_seed = np.random.SeedSequence([seed, 1, year]).spawn(2)
        rain = _season_rain(rain_seed, year)
        q = _season_discharge(rain, truth, 20.0, area, noise_seed, year)
        rain_vals: list = [float(v) for v in rain]
        q_vals: list = [float(v) for v in q]
        if year == 1994:
            q_vals[80] = None  # July 20 missing
        if year == 1997:
            # storm flow from May 20 through June 1 keeps the start wet
            for i in range(19, 32):
                q_vals[i] = float(np.max(q)) * 2
        if year == 1999:
            rain_vals[60] = None  # June 30 missing
        dates += _season(year)
        rain_all += rain_vals
        q_all += q_vals
        truths.append((ws, year, truth))
    write_gauge_csv(root / "discharge" / f"{ws}.csv", dates, q_all)
    write_gauge_csv(root / "rainfall" / f"{ws}.csv", dates, rain_all)
    _write_truth(root / "truth.csv", truths)
    _write_config(root / "config.json", {
        "seed": seed,
        "out": "out",
        "data": {"watersheds": "watersheds.csv", "discharge_dir": "discharge",
                 "rainfall_dir": "rainfall"},
    })


def make_survey_fixture(root: Path, seed: int = 0) -> None:
    root.mkdir(parents=True, exist_ok=True)
    (root / "discharge").mkdir(exist_ok=True)
    (root / "rainfall").mkdir(exist_ok=True)
    # watersheds on a 0.3 x 0.5 degree lattice; each has its own rainfall cell
    # 0.05 degrees away, much closer than any other cell
    sheds = []
    for i, length in enumerate(SURVEY_LENGTHS):
        lat, lon = 42.0 + 0.3 * (i % 3), -77.5 + 0.5 * (i // 3)
        sheds.append((f"ws{i + 1:02d}", round(lat, 3), round(lon, 3), round(float(length**2), 2),
                      SURVEY_YEARS))
    sheds.append(("ws09", 42.9, -75.5, 150.0, SURVEY_YEARS[:5]))
    cells = [(f"c{i + 1:02d}", round(lat + 0.05, 3), round(lon - 0.05, 3))
             for i, (_, lat, lon, _, _) in enumerate(sheds)]
    cells.append(("c99", 44.0, -74.0))
    with open(root / "cells.csv", "w") as fh:
        fh.write("id,lat,lon\n")
        for c in cells:
            fh.write(f"{c[0]},{c[1]},{c[2]}\n")
    with open(root / "watersheds.csv", "w") as fh:
        fh.write("id,name,lat,lon,area_km2\n")
        for ws, lat, lon, area, _ in sheds:
            fh.write(f"{ws},Synthetic {ws},{lat},{lon},{area}\n")

    rain_by_cell: dict[str, tuple[list, list]] = {}
    for cid, _, _ in cells:
        dates, values = [], []
        for year in SURVEY_YEARS:
            cell_seed = np.random.SeedSequence([seed, 2, int(cid[1:]), year])
            dates += _season(year)
            values += [float(v) for v in _season_rain(cell_seed, year)]
        rain_by_cell[cid] = (dates, values)
        write_gauge_csv(root / "rainfall" / f"{cid}.csv", dates, values)

    truths = []
    for j, (ws, lat, lon, area, years) in enumerate(sheds):
        truth = survey_truth(float(np.sqrt(area)))
        dates_all, rain_all = rain_by_cell[nearest_cell(lat, lon, cells)]
        dates, q_all = [], []
        for year in years:
            k = SURVEY_YEARS.index(year) * SEASON_DAYS
            rain = np.array(rain_all[k:k + SEASON_DAYS])
            noise_seed = np.random.SeedSequence([seed, 2, 100 + j, year])
            dates += dates_all[k:k + SEASON_DAYS]
            q_all += [float(v) for v in _season_discharge(rain, truth, 10.0, area, noise_seed, year)]
            truths.append((ws, year, truth))
        write_gauge_csv(root / "discharge" / f"{ws}.csv", dates, q_all)
    _write_truth(root / "truth.csv", truths)
    _write_config(root / "config.json", {
        "seed": seed,
        "out": "out",
        "data": {"watersheds": "watersheds.csv", "discharge_dir": "discharge",
                 "rainfall_dir": "rainfall", "cells": "cells.csv"},
    })


def make_sweep_config(root: Path, seed: int = 0) -> None:
    root.mkdir(parents=True, exist_ok=True)
    _write_config(root / "config.json", {
        "seed": seed,
        "out": "out",
        "sweep": {"snr_grid": [2.0, 10.0], "reps": 4},
        "chain": {"n_samples": 4000, "burn_in": 1000},
    })


def make_fixtures(root: Path, seed: int = 0) -> None:
    """Write the ``fit``, ``survey`` and ``sweep`` fixture trees under ``root``."""
    root = Path(root)
    make_fit_fixture(root / "fit", seed)
    make_survey_fixture(root / "survey", seed)
    make_sweep_config(root / "sweep", seed)


def bundled_fixtures() -> Path:
    """Directory of the fixture trees shipped with the package."""
    return Path(__file__).parent / "data" / "fixtures"
