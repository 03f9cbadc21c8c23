"""Command-line driver: ``iuhtrack {synth-sweep,fit,track,survey,make-fixtures}``.

Exit codes: 0 success, 2 configuration error, 3 data error (a rejection log
is written when one exists), 4 numerical failure.

Every output carries the config hash and master seed: as ``#`` comment
lines at the top of CSV files, a ``provenance`` object in JSON files and an
XML comment in SVG files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .fixtures import make_fixtures
from .ingest import DataError, RejectionLog, parse_cells_csv, parse_watershed_csv
from .iuh_model import IuhParams
from .metrics import PARAM_NAMES, FitRecord, ecdf, r2_identity, reference_snr
from .pipeline import (
    TRACK_COLUMNS,
    NumericalError,
    fit_records,
    load_episodes,
    survey,
    track_change_points,
    track_rows,
)
from .svg import Panel, Series, render
from .synthetic import FlatSignalError, snr_sweep, sweep_percentiles, truth_sampler

log = logging.getLogger("iuhtrack")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


# --- writers ----------------------------------------------------------------


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def write_csv(path: Path, rows: Sequence[dict], cfg: RunConfig,
              columns: Optional[Sequence[str]] = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        for key, value in cfg.provenance().items():
            fh.write(f"# {key}={value}\n")
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in columns})


def write_json(path: Path, doc: dict, cfg: RunConfig) -> None:
    doc = {"provenance": cfg.provenance(), **doc}
    path.write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_svg(path: Path, panels: Sequence[Panel], title: str, cfg: RunConfig) -> None:
    path.write_text(render(panels, title, cfg.provenance()))


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _float(text: str) -> float:
    return float(text) if text not in ("", "None") else float("nan")


def read_fits_csv(path: Path) -> list[FitRecord]:
    """Rebuild the fields of fit records needed for tracking from ``fits.csv``."""
    try:
        rows = read_csv(path)
        return [
            FitRecord(
                watershed=r["watershed"], year=int(r["year"]),
                bayes=IuhParams(*(float(r[f"bayes_{n}"]) for n in PARAM_NAMES)),
                grid_init=IuhParams(*(float(r[f"grid_init_{n}"]) for n in PARAM_NAMES)),
                sigma2=_float(r["sigma2"]), cc=_float(r["cc"]), nse=_float(r["nse"]),
                snr_observed=_float(r["snr_observed"]),
                runoff_coefficient=_float(r["runoff_coefficient"]), idr=float(r["idr"]),
                iuh_type=r["iuh_type"], acceptance_rate=_float(r["acceptance_rate"]),
                n_days=int(r["n_days"]), extension_days=int(r["extension_days"]),
                total_rain=_float(r["total_rain"]), total_runoff=_float(r["total_runoff"]),
            )
            for r in rows
        ]
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: not a fits table ({exc})") from None


def _rejection_summary(rejections: RejectionLog) -> dict:
    return dict(sorted(Counter(e["reason"] for e in rejections.entries).items()))


# --- subcommands ------------------------------------------------------------


def cmd_synth_sweep(cfg: RunConfig) -> dict:
    """SNR recovery sweep: sweep.csv, sweep_summary.json, fig1.svg."""
    sw = cfg.section("sweep")
    box = cfg.box
    records = snr_sweep(truth_sampler(box, sw["truth_margin"]), sw["snr_grid"], sw["reps"],
                        cfg.chain, box=box, n_days=sw["n_days"], master_seed=cfg.seed,
                        workers=cfg.threads)
    out = cfg.out_dir
    write_csv(out / "sweep.csv", [r.to_row() for r in records], cfg)
    summary = sweep_percentiles(records)
    write_json(out / "sweep_summary.json", {"percentiles": summary}, cfg)

    snrs = [float(s) for s in summary]
    panels = []
    labels = {"lam": "lambda", "k": "k", "theta": "theta"}
    for name in PARAM_NAMES:
        panel = Panel(labels[name], "target SNR", "relative error", log_x=True)
        for method, color in (("grid_init", "#7f7f7f"), ("mcmc", "#1f77b4")):
            bands = [summary[s][method][name] for s in summary]
            panel.series.append(Series(snrs, [b["p25"] for b in bands], kind="band",
                                       y2=[b["p75"] for b in bands], color=color))
            panel.series.append(Series(snrs, [b["p50"] for b in bands], label=method, color=color))
        panels.append(panel)
    write_svg(out / "fig1.svg", panels, "Median and interquartile relative error", cfg)
    return {"records": records, "summary": summary}


def _load(cfg: RunConfig):
    metas = parse_watershed_csv(cfg.path("data", "watersheds"))
    cells_path = cfg.path("data", "cells", required=False)
    cells = parse_cells_csv(cells_path) if cells_path else None
    years = cfg.section("data")["years"]
    years = range(years[0], years[1] + 1) if years else None
    episodes, rejections = load_episodes(metas, cfg.path("data", "discharge_dir"),
                                         cfg.path("data", "rainfall_dir"), cfg.qc, cells, years)
    rejections.write_jsonl(cfg.out_dir / "rejections.jsonl")
    if not episodes:
        raise DataError(f"no episodes survive quality control; rejections: "
                        f"{_rejection_summary(rejections)}")
    return metas, episodes, rejections


def cmd_fit(cfg: RunConfig) -> dict:
    """Per-episode Bayesian and random-search fits with skill tables."""
    _, episodes, rejections = _load(cfg)
    records = fit_records(episodes, cfg.box, cfg.chain, master_seed=cfg.seed,
                          mle_draws=cfg.section("mle")["n_draws"], workers=cfg.threads)
    out = cfg.out_dir
    write_csv(out / "fits.csv", [r.to_row() for r in records], cfg)
    for metric in ("cc", "nse"):
        rows = []
        for method, attr in (("bayes", metric), ("mle", f"{metric}_mle")):
            vals = [getattr(r, attr) for r in records if math.isfinite(getattr(r, attr))]
            if vals:
                rows += [{"method": method, "value": v, "fraction": f} for v, f in ecdf(vals)]
        write_csv(out / f"ecdf_{metric}.csv", rows, cfg, ["method", "value", "fraction"])

    scatter = []
    for r in records:
        row = {"watershed": r.watershed, "year": r.year}
        for n in PARAM_NAMES:
            row[f"mle_{n}"] = getattr(r.mle, n)
            row[f"bayes_{n}"] = getattr(r.bayes, n)
        scatter.append(row)
    r2 = {}
    for n in PARAM_NAMES:
        x = [getattr(r.mle, n) for r in records]
        y = [getattr(r.bayes, n) for r in records]
        r2[n] = r2_identity(x, y) if len(records) >= 2 else float("nan")
    write_csv(out / "scatter_mle_bayes.csv", scatter, cfg,
              ["watershed", "year"] + [f"{m}_{n}" for n in PARAM_NAMES for m in ("mle", "bayes")])

    try:
        ref = reference_snr(records)
    except ValueError:
        ref = float("nan")
    summary = {
        "n_episodes": len(records),
        "n_rejected": len(rejections),
        "rejections": _rejection_summary(rejections),
        "reference_snr": ref,
        "r2_identity_mle_vs_bayes": r2,
        "median_cc": float(np.nanmedian([r.cc for r in records])),
        "median_nse": float(np.nanmedian([r.nse for r in records])),
    }
    write_json(out / "fit_summary.json", summary, cfg)
    return {"records": records, "summary": summary}


def cmd_track(cfg: RunConfig) -> dict:
    """Per-year parameter series and change-point scan of k."""
    fits_path = cfg.path("track", "fits", required=False)
    if fits_path is not None:
        records = read_fits_csv(fits_path)
    else:
        _, episodes, _ = _load(cfg)
        records = fit_records(episodes, cfg.box, cfg.chain, master_seed=cfg.seed,
                              workers=cfg.threads)
    rows = track_rows(records)
    out = cfg.out_dir
    write_csv(out / "track.csv", rows, cfg, TRACK_COLUMNS)
    scans = track_change_points(records, cfg.section("track")["min_episodes"])
    doc = {"statistic": "|mean(k before) - mean(k after)| / pooled stdev "
                        "(quantitative surfacing aid, not a significance test)",
           "watersheds": {}}
    for ws, cp in scans.items():
        if cp is None:
            doc["watersheds"][ws] = {"skipped": "fewer than "
                                                f"{cfg.section('track')['min_episodes']} episodes"}
        else:
            doc["watersheds"][ws] = {"split_year": cp.split_year, "statistic": cp.statistic,
                                     "scan": [{"split_year": y, "statistic": s} for y, s in cp.scan]}
    write_json(out / "changepoint.json", doc, cfg)
    return {"records": records, "rows": rows, "change_points": scans}


def cmd_survey(cfg: RunConfig) -> dict:
    """Median IDR against watershed length scale across many watersheds."""
    metas, episodes, rejections = _load(cfg)
    records = fit_records(episodes, cfg.box, cfg.chain, master_seed=cfg.seed, workers=cfg.threads)
    sv = cfg.section("survey")
    result = survey(records, metas, sv["min_nse"], sv["min_episodes"])
    out = cfg.out_dir
    write_csv(out / "survey_fits.csv", [r.to_row() for r in records], cfg)
    write_csv(out / "survey.csv", list(result.rows), cfg)
    reg = result.regression
    write_json(out / "survey_summary.json", {
        "n_watersheds": len(result.rows),
        "n_qualifying": sum(r["qualifies"] for r in result.rows),
        "selection": {"min_nse_exclusive": sv["min_nse"], "min_episodes_exclusive": sv["min_episodes"]},
        "regression": {"x": "length_scale_km", "y": "median_idr", "slope": reg.slope,
                       "intercept": reg.intercept, "f_statistic": reg.f_statistic,
                       "one_tailed_p": reg.one_tailed_p, "n": reg.n},
        "rejections": _rejection_summary(rejections),
    }, cfg)

    good = [r for r in result.rows if r["qualifies"]]
    bad = [r for r in result.rows if not r["qualifies"]]
    geo = Panel("watersheds", "longitude", "latitude")
    geo.series.append(Series([r["lon"] for r in good], [r["lat"] for r in good], "qualifying",
                             kind="points"))
    geo.series.append(Series([r["lon"] for r in bad], [r["lat"] for r in bad], "excluded",
                             kind="points", color="#bbbbbb"))
    xs = [r["length_scale"] for r in good]
    scat = Panel(f"median IDR, one-tailed p = {reg.one_tailed_p:.2g}", "length scale (km)",
                 "median IDR")
    scat.series.append(Series(xs, [r["median_idr"] for r in good], kind="points"))
    x_line = [min(xs), max(xs)]
    scat.series.append(Series(x_line, [reg.intercept + reg.slope * x for x in x_line],
                              "least squares", color="#d62728"))
    write_svg(out / "fig7.svg", [geo, scat], "IDR against watershed size", cfg)
    return {"records": records, "survey": result}


COMMANDS = {
    "synth-sweep": cmd_synth_sweep,
    "fit": cmd_fit,
    "track": cmd_track,
    "survey": cmd_survey,
}


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iuhtrack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"iuhtrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth-sweep": "synthetic SNR recovery sweep (sweep.csv, sweep_summary.json, fig1.svg)",
        "fit": "fit gauge-data episodes (fits.csv, ECDFs, MLE scatter, fit_summary.json)",
        "track": "per-year parameter series and change-point scan (track.csv, changepoint.json)",
        "survey": "multi-watershed IDR vs size regression (survey.csv, fig7.svg)",
        "make-fixtures": "write the desk-scale fixture CSVs and configs",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, help="worker processes (overrides the config)")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, seed=args.seed, out=args.out, threads=args.threads)
        if args.command == "make-fixtures":
            make_fixtures(cfg.out_dir, cfg.seed)
            return EXIT_OK
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, FlatSignalError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> None:
    logging.basicConfig(format="%(levelname)s: %(message)s", level=logging.WARNING)
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
