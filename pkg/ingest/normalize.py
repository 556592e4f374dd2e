"""
Feature normalization: urban (POI / road) standardization and the
meteorology + calendar encodings aligned to the common time axis.
"""

import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import holidays as holiday_calendars
import numpy as np
import pandas as pd

from core.errors import DataError
from core.schemas import IngestIssues
from ingest.extract import RegionCatalog, line_of, naive_utc, parse_timestamp, read_table

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8
DAY_NAMES = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"]

PathLike = Union[str, Path]


@dataclass(frozen=True)
class UrbanFeatures:
    poi: np.ndarray  # (N, d_P), standardized
    road: np.ndarray  # (N, d_R), standardized
    poi_columns: List[str]
    road_columns: List[str]
    stats: Dict[str, Dict[str, List[float]]] = field(default_factory=dict, repr=False)


@dataclass(frozen=True)
class ExternalFeatures:
    meteorology: np.ndarray  # (N, T_total, d_M), identical rows across regions
    calendar: np.ndarray  # (N, T_total, d_C)
    met_columns: List[str]
    cal_columns: List[str]


# ------------------------- Urban features -------------------------

def standardize(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column z-scores over regions (population std, variance floored)."""
    mean = values.mean(axis=0)
    std = np.sqrt(np.maximum(values.var(axis=0), VARIANCE_FLOOR))
    return (values - mean) / std, mean, std


def _numeric_table(path: PathLike, catalog: RegionCatalog, issues: IngestIssues, label: str) -> Tuple[np.ndarray, List[str]]:
    frame = read_table(path, ["region_id"])
    columns = [c for c in frame.columns if c != "region_id"]
    if not columns:
        raise DataError("no feature columns besides region_id", path=str(path), line=1)

    n = catalog.n_regions
    values = np.full((n, len(columns)), np.nan)
    seen: Set[str] = set()
    for pos in range(len(frame)):
        line = line_of(pos)
        rid = str(frame.iat[pos, frame.columns.get_loc("region_id")]).strip()
        if rid not in catalog.index_of:
            issues.unknown_regions.append(rid)
            continue
        if rid in seen:
            raise DataError(f"duplicate row for region '{rid}'", path=str(path), line=line, column="region_id")
        seen.add(rid)
        for j, column in enumerate(columns):
            cell = str(frame.iat[pos, frame.columns.get_loc(column)]).strip()
            if cell == "":
                continue
            try:
                values[catalog.index_of[rid], j] = float(cell)
            except ValueError as exc:
                raise DataError(f"non-numeric value '{cell}'", path=str(path), line=line, column=column) from exc

    absent = [catalog.region_ids[i] for i in range(n) if catalog.region_ids[i] not in seen]
    if absent:
        logger.warning("%s features: %d region(s) absent, imputing column means", label, len(absent))
        issues.imputed_regions.extend(absent)
    if np.isnan(values).all(axis=0).any():
        empty = [columns[j] for j in np.flatnonzero(np.isnan(values).all(axis=0))]
        raise DataError(f"column(s) {empty} have no values", path=str(path))

    missing = np.isnan(values)
    if missing.any():
        means = np.nanmean(values, axis=0)
        values = np.where(missing, means[None, :], values)
        logger.warning("%s features: %d missing cell(s) imputed with column means", label, int(missing.sum()))
    return values, columns


def load_urban_features(poi_path: PathLike, road_path: PathLike, catalog: RegionCatalog) -> Tuple[UrbanFeatures, IngestIssues]:
    issues = IngestIssues()
    poi_raw, poi_columns = _numeric_table(poi_path, catalog, issues, "poi")
    road_raw, road_columns = _numeric_table(road_path, catalog, issues, "road")
    poi, poi_mean, poi_std = standardize(poi_raw)
    road, road_mean, road_std = standardize(road_raw)
    issues.unknown_regions = sorted(set(issues.unknown_regions))
    issues.imputed_regions = sorted(set(issues.imputed_regions))
    stats = {
        "poi": {"mean": poi_mean.tolist(), "std": poi_std.tolist()},
        "road": {"mean": road_mean.tolist(), "std": road_std.tolist()},
    }
    return UrbanFeatures(poi, road, poi_columns, road_columns, stats), issues


# ------------------------- Meteorology -------------------------

def hourly_axis(time_origin: datetime, interval_hours: int, n_steps: int) -> pd.DatetimeIndex:
    return pd.date_range(naive_utc(time_origin), periods=n_steps * interval_hours, freq="h")


def uncovered_ranges(
    observed: Iterable[pd.Timestamp],
    start: pd.Timestamp,
    end: pd.Timestamp,
    max_gap_hours: int,
) -> List[Tuple[pd.Timestamp, pd.Timestamp]]:
    """Stretches of [start, end) longer than max_gap_hours without a reading.

    A reading before ``start`` (after ``end``) closes the leading (trailing) stretch.
    """
    obs = pd.DatetimeIndex(sorted(set(observed)))
    gap = pd.Timedelta(hours=max_gap_hours)
    before = obs[obs <= start]
    after = obs[obs >= end]
    points = [before[-1] if len(before) else start]
    points += list(obs[(obs > start) & (obs < end)])
    points.append(after[0] if len(after) else end)

    ranges = []
    for a, b in zip(points[:-1], points[1:]):
        if b - a > gap:
            ranges.append((max(a, start), min(b, end)))
    return ranges


def read_weather(path: PathLike) -> Tuple[pd.DataFrame, List[str]]:
    frame = read_table(path, ["timestamp"])
    columns = [c for c in frame.columns if c != "timestamp"]
    if not columns:
        raise DataError("weather file has no measurement columns", path=str(path), line=1)
    stamps = []
    values = np.empty((len(frame), len(columns)))
    for pos in range(len(frame)):
        line = line_of(pos)
        stamps.append(parse_timestamp(str(frame.iat[pos, frame.columns.get_loc("timestamp")]), path, line))
        for j, column in enumerate(columns):
            cell = str(frame.iat[pos, frame.columns.get_loc(column)]).strip()
            try:
                values[pos, j] = float(cell) if cell else np.nan
            except ValueError as exc:
                raise DataError(f"non-numeric value '{cell}'", path=str(path), line=line, column=column) from exc
    try:
        index = pd.DatetimeIndex(stamps).floor("h")
    except (ValueError, OverflowError) as exc:
        raise DataError(f"timestamps outside the representable range: {exc}", path=str(path)) from exc
    hourly = pd.DataFrame(values, columns=columns, index=index)
    hourly = hourly.groupby(level=0).mean().sort_index()
    return hourly, columns


def aggregate_weather(
    hourly: pd.DataFrame,
    time_origin: datetime,
    interval_hours: int,
    n_steps: int,
    max_gap_hours: int = 72,
    path: Optional[PathLike] = None,
) -> np.ndarray:
    """Forward-fill (leading gaps back-filled) onto the hourly axis, then take interval means."""
    axis = hourly_axis(time_origin, interval_hours, n_steps)
    start, end = axis[0], axis[-1] + pd.Timedelta(hours=1)
    observed = hourly.dropna(how="all").index
    if len(observed) == 0:
        raise DataError("weather file holds no readings", path=str(path) if path else None)
    gaps = uncovered_ranges(observed, start, end, max_gap_hours)
    if gaps:
        listing = "; ".join(f"{a.isoformat()} .. {b.isoformat()}" for a, b in gaps)
        raise DataError(f"weather does not cover the accident axis: {listing}", path=str(path) if path else None)

    filled = hourly.reindex(hourly.index.union(axis)).sort_index().ffill().bfill().reindex(axis)
    n_filled = int(len(axis) - axis.isin(observed).sum())
    if n_filled:
        logger.warning("weather: %d hourly slot(s) filled from neighbouring readings", n_filled)
    return filled.to_numpy().reshape(n_steps, interval_hours, -1).mean(axis=1)


# ------------------------- Calendar -------------------------

def read_holidays(path: PathLike) -> Set[date]:
    frame = read_table(path, ["date"])
    days = set()
    for pos, text in enumerate(frame["date"]):
        days.add(parse_timestamp(text, path, line_of(pos), column="date").date())
    return days


def generated_holidays(time_origin: datetime, interval_hours: int, n_steps: int, country: str) -> Set[date]:
    last = time_origin + timedelta(hours=interval_hours * n_steps)
    years = range(time_origin.year, last.year + 1)
    calendar = holiday_calendars.country_holidays(country, years=years)
    return set(calendar.keys())


def calendar_columns(interval_hours: int) -> List[str]:
    columns = [f"dow_{d}" for d in DAY_NAMES] + ["holiday", "weekend"]
    if interval_hours == 12:
        columns.append("pm")
    return columns


def encode_calendar(time_origin: datetime, interval_hours: int, n_steps: int, holiday_days: Set[date]) -> np.ndarray:
    """(T_total, d_C): day-of-week one-hot, holiday flag, weekend flag[, AM/PM flag]."""
    columns = calendar_columns(interval_hours)
    out = np.zeros((n_steps, len(columns)))
    for t in range(n_steps):
        start = time_origin + timedelta(hours=interval_hours * t)
        dow = start.weekday()
        out[t, dow] = 1.0
        out[t, 7] = float(start.date() in holiday_days)
        out[t, 8] = float(dow >= 5)
        if interval_hours == 12:
            out[t, 9] = float(start.hour >= 12)
    return out


def build_external_features(
    weather_path: PathLike,
    holiday_path: Optional[PathLike],
    catalog: RegionCatalog,
    time_origin: datetime,
    interval_hours: int,
    n_steps: int,
    max_gap_hours: int = 72,
    holiday_country: str = "GB",
) -> Tuple[ExternalFeatures, IngestIssues]:
    issues = IngestIssues()
    hourly, met_columns = read_weather(weather_path)
    met = aggregate_weather(hourly, time_origin, interval_hours, n_steps, max_gap_hours, weather_path)

    if holiday_path is not None:
        days = read_holidays(holiday_path)
    else:
        days = generated_holidays(time_origin, interval_hours, n_steps, holiday_country)
        issues.notes.append(f"holidays generated for country {holiday_country}")
        logger.info("no holiday file, using %s public holidays", holiday_country)
    cal = encode_calendar(time_origin, interval_hours, n_steps, days)

    n = catalog.n_regions
    meteorology = np.broadcast_to(met[None], (n,) + met.shape)
    calendar = np.broadcast_to(cal[None], (n,) + cal.shape)
    return ExternalFeatures(meteorology, calendar, met_columns, calendar_columns(interval_hours)), issues
