"""Gauge file parsing, unit conversion and summer-episode extraction.

File formats
------------
Gauge CSV::

    date,value
    1990-06-01,3.2
    1990-06-02,-9999

Missing values are ``-9999`` or an empty field.

Watershed metadata CSV::

    id,name,lat,lon,area_km2

Rainfall grid-cell CSV (multi-watershed survey)::

    id,lat,lon
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from iuhtrack.iuh_model import DailySeries, IuhParams, Quantity

MISSING_SENTINELS = {"", "-9999", "-9999.0"}
SUMMER_DAYS = 92  # June 1 - August 31


class DataError(Exception):
    """Raised for malformed or unusable input data."""


class Variable(str, enum.Enum):
    RAINFALL = "rainfall"
    DISCHARGE = "discharge"
    RUNOFF_DEPTH = "runoff-depth"


class Rejection(str, enum.Enum):
    NO_DATA = "no data"
    MISSING_RUNOFF = "missing runoff"
    MISSING_RAINFALL = "missing rainfall"
    WET_START = "wet start after max extension"


@dataclass(frozen=True)
class GaugeRecord:
    date: dt.date
    value: Optional[float]
    variable: Variable


@dataclass(frozen=True)
class WatershedMeta:
    id: str
    drainage_area: float
    latitude: float = float("nan")
    longitude: float = float("nan")
    name: str = ""

    def __post_init__(self):
        if not self.drainage_area > 0:
            raise DataError(f"watershed {self.id}: drainage area must be positive")

    @property
    def length_scale(self) -> float:
        """Square root of the drainage area, km."""
        return math.sqrt(self.drainage_area)


@dataclass(frozen=True)
class EpisodeData:
    """One paired rainfall/runoff summer period, the unit of estimation."""

    watershed: WatershedMeta
    year: int
    rain: DailySeries
    runoff: DailySeries
    extension_days: int = 0
    truth: Optional[IuhParams] = None

    def __post_init__(self):
        if len(self.rain) != len(self.runoff):
            raise ValueError("rain and runoff must have the same length")
        if self.rain.start_date != self.runoff.start_date:
            raise ValueError("rain and runoff must share a start date")
        if self.extension_days < 0:
            raise ValueError("extension_days must be non-negative")

    @property
    def n_days(self) -> int:
        return len(self.rain)


@dataclass(frozen=True)
class EpisodeQcPolicy:
    max_extension: int = 10
    start_threshold_quantile: float = 0.5
    drop_if_missing: bool = True

    def __post_init__(self):
        if self.max_extension < 0:
            raise ValueError("max_extension must be non-negative")
        if not 0 < self.start_threshold_quantile < 1:
            raise ValueError("start_threshold_quantile must lie in (0, 1)")


@dataclass
class RejectionLog:
    entries: list[dict] = field(default_factory=list)

    def add(self, station: str, year: int, reason: Rejection) -> None:
        self.entries.append({"station": station, "year": year, "reason": reason.value})

    def extend(self, other: "RejectionLog") -> None:
        self.entries.extend(other.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def write_jsonl(self, path: Path) -> None:
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


class _StrictLog(RejectionLog):
    """Turns missing-data rejections into errors (``drop_if_missing=False``)."""

    def add(self, station: str, year: int, reason: Rejection) -> None:
        if reason in (Rejection.MISSING_RAINFALL, Rejection.MISSING_RUNOFF, Rejection.NO_DATA):
            raise DataError(f"station {station}, {year}: {reason.value}")
        super().add(station, year, reason)


def parse_gauge_csv(path, variable: Variable | str) -> list[GaugeRecord]:
    """Read a ``date,value`` gauge file into chronologically sorted records.

    Raises:
        DataError: On a missing header, malformed row, unparseable date or
            duplicated date. The message names the line or date.
    """
    variable = Variable(variable)
    path = Path(path)
    records: dict[dt.date, GaugeRecord] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "value"]:
            raise DataError(f"{path}: expected header 'date,value', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            raw_date, raw_value = (c.strip() for c in row)
            try:
                date = dt.date.fromisoformat(raw_date)
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable date {raw_date!r}") from None
            if raw_value in MISSING_SENTINELS:
                value = None
            else:
                try:
                    value = float(raw_value)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: malformed value {raw_value!r}") from None
                if not math.isfinite(value):
                    value = None
            if date in records:
                raise DataError(f"{path}:{lineno}: duplicate date {date.isoformat()}")
            records[date] = GaugeRecord(date, value, variable)
    return [records[d] for d in sorted(records)]


def write_gauge_csv(path, dates: Sequence[dt.date], values: Sequence[Optional[float]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("date,value\n")
        for d, v in zip(dates, values):
            fh.write(f"{d.isoformat()},{'-9999' if v is None else repr(float(v))}\n")


def parse_watershed_csv(path) -> list[WatershedMeta]:
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"id", "name", "lat", "lon", "area_km2"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise DataError(f"{path}: expected header id,name,lat,lon,area_km2")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(
                    WatershedMeta(
                        id=row["id"].strip(),
                        name=row["name"].strip(),
                        latitude=float(row["lat"]),
                        longitude=float(row["lon"]),
                        drainage_area=float(row["area_km2"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return out


def parse_cells_csv(path) -> list[tuple[str, float, float]]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "lat", "lon"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected header id,lat,lon")
        try:
            return [(r["id"].strip(), float(r["lat"]), float(r["lon"])) for r in reader]
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None


def discharge_to_depth(records: Iterable[GaugeRecord], meta: WatershedMeta) -> list[GaugeRecord]:
    """Convert discharge in m^3/s into basin-average runoff depth in mm/day.

    ``depth = Q * 86400 s/day / (A * 1e6 m^2/km^2) * 1e3 mm/m = Q * 86.4 / A``
    """
    if not meta.drainage_area > 0:
        raise DataError(f"watershed {meta.id}: drainage area must be positive")
    factor = 86.4 / meta.drainage_area
    out = []
    for rec in records:
        value = None if rec.value is None else rec.value * factor
        out.append(GaugeRecord(rec.date, value, Variable.RUNOFF_DEPTH))
    return out


def great_circle_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * 6371.0088 * math.asin(min(1.0, math.sqrt(a)))


def nearest_cell(lat: float, lon: float, cells: Sequence[tuple[str, float, float]]) -> str:
    """Id of the grid cell whose center is closest; ties go to the lower (lat, lon)."""
    if not cells:
        raise DataError("no rainfall grid cells available")
    best = min(cells, key=lambda c: (great_circle_km(lat, lon, c[1], c[2]), c[1], c[2]))
    return best[0]


def _quantile(values: np.ndarray, q: float) -> float:
    # linear interpolation between order statistics
    return float(np.quantile(values, q, method="linear"))


def extract_episodes(
    rain_records: Sequence[GaugeRecord],
    runoff_records: Sequence[GaugeRecord],
    meta: WatershedMeta,
    policy: EpisodeQcPolicy = EpisodeQcPolicy(),
    years: Optional[Iterable[int]] = None,
) -> tuple[list[EpisodeData], RejectionLog]:
    """Cut quality-controlled June-August episodes out of daily records.

    The start date moves earlier one day at a time while start-day runoff is
    at or above the policy quantile of the 92 summer days, up to
    ``policy.max_extension`` days. Years with missing data, or still wet at
    the start after the maximal extension, are rejected and logged.

    Args:
        rain_records: Daily rainfall depth records, mm/day.
        runoff_records: Daily runoff depth records, mm/day.
        meta: Watershed the records belong to.
        policy: Extension and rejection settings.
        years: Years to consider. Defaults to every year present in the
            runoff records.
    """
    rain = {r.date: r.value for r in rain_records}
    runoff = {r.date: r.value for r in runoff_records}
    if years is None:
        years = sorted({d.year for d in runoff})
    log = RejectionLog()
    if not policy.drop_if_missing:
        log = _StrictLog()
    episodes = []
    for year in sorted(set(years)):
        june1 = dt.date(year, 6, 1)
        summer = [june1 + dt.timedelta(days=i) for i in range(SUMMER_DAYS)]
        if not any(d in runoff for d in summer):
            log.add(meta.id, year, Rejection.NO_DATA)
            continue
        summer_runoff = [runoff.get(d) for d in summer]
        if any(v is None for v in summer_runoff):
            log.add(meta.id, year, Rejection.MISSING_RUNOFF)
            continue
        threshold = _quantile(np.array(summer_runoff), policy.start_threshold_quantile)

        start = june1
        ext = 0
        missing = False
        while runoff[start] >= threshold and ext < policy.max_extension:
            start -= dt.timedelta(days=1)
            ext += 1
            if runoff.get(start) is None:
                missing = True
                break
        if missing:
            log.add(meta.id, year, Rejection.MISSING_RUNOFF)
            continue
        if runoff[start] >= threshold:
            log.add(meta.id, year, Rejection.WET_START)
            continue

        window = [start + dt.timedelta(days=i) for i in range(SUMMER_DAYS + ext)]
        rain_values = [rain.get(d) for d in window]
        if any(v is None for v in rain_values):
            log.add(meta.id, year, Rejection.MISSING_RAINFALL)
            continue
        episodes.append(
            EpisodeData(
                watershed=meta,
                year=year,
                rain=DailySeries(start, np.array(rain_values), Quantity.RAINFALL),
                runoff=DailySeries(start, np.array([runoff[d] for d in window]), Quantity.RUNOFF),
                extension_days=ext,
            )
        )
    return episodes, log
