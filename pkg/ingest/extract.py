"""
CSV extraction for regions, adjacency edges and accident records.

Every loader is total over its grammar: a line either parses or raises a
DataError carrying the file and line number. Problems that do not invalidate
the file (unknown region ids, rows before the time origin, self-loops) are
collected in an IngestIssues record and logged.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import DataError
from core.schemas import AccidentEvent, IngestIssues, RejectedRow

logger = logging.getLogger(__name__)

SEVERITY_NAMES = {"slight": 1, "serious": 2, "fatal": 3}
_LINE_RE = re.compile(r"line (\d+)")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class RegionCatalog:
    region_ids: List[str]
    index_of: Dict[str, int]
    adjacency: np.ndarray = field(repr=False)  # (N, N) symmetric binary, zero diagonal

    @property
    def n_regions(self) -> int:
        return len(self.region_ids)

    @classmethod
    def from_ids(cls, region_ids: Sequence[str]) -> "RegionCatalog":
        ids = list(region_ids)
        if len(set(ids)) != len(ids):
            raise DataError("duplicate region ids in catalog")
        n = len(ids)
        return cls(ids, {rid: i for i, rid in enumerate(ids)}, np.zeros((n, n), dtype=np.float64))

    def with_adjacency(self, adjacency: np.ndarray) -> "RegionCatalog":
        return RegionCatalog(self.region_ids, self.index_of, adjacency)

    def isolated_regions(self) -> List[str]:
        degree = self.adjacency.sum(axis=1)
        return [self.region_ids[i] for i in np.flatnonzero(degree == 0)]


# ------------------------- CSV helpers -------------------------

def read_table(path: PathLike, required: Sequence[str]) -> pd.DataFrame:
    """Read a UTF-8 CSV as strings; header row mandatory."""
    path = Path(path)
    if not path.exists():
        raise DataError("file not found", path=str(path))
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise DataError("empty file (header row is mandatory)", path=str(path), line=1) from exc
    except pd.errors.ParserError as exc:
        match = _LINE_RE.search(str(exc))
        raise DataError(f"malformed row: {exc}", path=str(path), line=int(match.group(1)) if match else None) from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"file is not UTF-8: {exc}", path=str(path)) from exc

    frame.columns = [str(c).strip() for c in frame.columns]
    frame = frame.fillna("")  # short rows
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataError(f"missing header column(s) {missing}", path=str(path), line=1)
    return frame


def line_of(position: int) -> int:
    """File line of the data row at ``position`` (header is line 1)."""
    return position + 2


def naive_utc(stamp: datetime) -> datetime:
    """Drop the offset of an aware datetime after converting it to UTC."""
    if stamp.tzinfo is None:
        return stamp
    return stamp.astimezone(timezone.utc).replace(tzinfo=None)


def parse_timestamp(value: str, path: PathLike, line: int, column: str = "timestamp") -> datetime:
    try:
        stamp = pd.Timestamp(value.strip())
        if pd.isna(stamp):
            raise ValueError("not a time")
        if stamp.tzinfo is not None:
            stamp = stamp.tz_convert(None)
        return stamp.to_pydatetime()
    except (ValueError, TypeError, OverflowError, pd.errors.OutOfBoundsDatetime) as exc:
        raise DataError(f"unparseable timestamp '{value}'", path=str(path), line=line, column=column) from exc


def parse_severity(value: str, path: PathLike, line: int) -> int:
    text = value.strip().lower()
    if text in SEVERITY_NAMES:
        return SEVERITY_NAMES[text]
    if text in ("1", "2", "3"):
        return int(text)
    raise DataError(f"invalid severity '{value}'", path=str(path), line=line, column="severity")


def time_index_of(stamp: datetime, origin: datetime, interval_hours: int) -> int:
    return math.floor((stamp - origin) / timedelta(hours=interval_hours))


# ------------------------- Loaders -------------------------

def load_regions(path: PathLike) -> RegionCatalog:
    frame = read_table(path, ["region_id"])
    ids = []
    seen = set()
    for pos, rid in enumerate(frame["region_id"]):
        rid = rid.strip()
        if not rid:
            raise DataError("empty region id", path=str(path), line=line_of(pos), column="region_id")
        if rid in seen:
            raise DataError(f"duplicate region id '{rid}'", path=str(path), line=line_of(pos), column="region_id")
        seen.add(rid)
        ids.append(rid)
    logger.info("catalog: %d regions from %s", len(ids), path)
    return RegionCatalog.from_ids(ids)


def load_adjacency(path: PathLike, catalog: RegionCatalog) -> Tuple[RegionCatalog, IngestIssues]:
    """Undirected edge list -> symmetric binary adjacency. Duplicates are idempotent."""
    frame = read_table(path, ["region_a", "region_b"])
    issues = IngestIssues()
    n = catalog.n_regions
    adjacency = np.zeros((n, n), dtype=np.float64)
    for pos, (a, b) in enumerate(zip(frame["region_a"], frame["region_b"])):
        a, b = a.strip(), b.strip()
        line = line_of(pos)
        for rid, column in ((a, "region_a"), (b, "region_b")):
            if rid not in catalog.index_of:
                raise DataError(f"edge endpoint '{rid}' is not in the region catalog", path=str(path), line=line, column=column)
        if a == b:
            logger.warning("self-loop %s at %s line %d rejected", a, path, line)
            issues.self_loops.append(a)
            issues.rejected_rows.append(RejectedRow(line=line, reason="self-loop", raw=f"{a},{b}"))
            continue
        i, j = catalog.index_of[a], catalog.index_of[b]
        adjacency[i, j] = adjacency[j, i] = 1.0

    catalog = catalog.with_adjacency(adjacency)
    isolated = catalog.isolated_regions()
    if isolated:
        logger.warning("%d region(s) have no neighbours: %s", len(isolated), ", ".join(isolated[:10]))
        issues.notes.append(f"isolated regions: {', '.join(isolated)}")
    return catalog, issues


def load_accidents(
    path: PathLike,
    catalog: RegionCatalog,
    time_origin: datetime,
    interval_hours: int,
    n_steps: Optional[int] = None,
) -> Tuple[List[AccidentEvent], IngestIssues]:
    """Parse `region_id,timestamp,severity` rows into events on the common axis.

    Malformed rows raise; unknown regions, rows before the origin and rows past
    the end of the axis are skipped and reported.
    """
    frame = read_table(path, ["region_id", "timestamp", "severity"])
    time_origin = naive_utc(time_origin)
    issues = IngestIssues()
    events: List[AccidentEvent] = []
    unknown = set()

    for pos, (rid, stamp_text, severity_text) in enumerate(zip(frame["region_id"], frame["timestamp"], frame["severity"])):
        line = line_of(pos)
        rid = rid.strip()
        stamp = parse_timestamp(stamp_text, path, line)
        severity = parse_severity(severity_text, path, line)
        raw = f"{rid},{stamp_text},{severity_text}"

        if rid not in catalog.index_of:
            unknown.add(rid)
            issues.rejected_rows.append(RejectedRow(line=line, reason=f"unknown region '{rid}'", raw=raw))
            continue
        if stamp < time_origin:
            issues.rejected_rows.append(RejectedRow(line=line, reason="timestamp before time origin", raw=raw))
            continue
        index = time_index_of(stamp, time_origin, interval_hours)
        if n_steps is not None and index >= n_steps:
            issues.rejected_rows.append(RejectedRow(line=line, reason="timestamp past end of time axis", raw=raw))
            continue
        events.append(AccidentEvent(region_index=catalog.index_of[rid], time_index=index, severity=severity))

    issues.unknown_regions = sorted(unknown)
    if issues.rejected_rows:
        logger.warning("%s: %d accident row(s) rejected (%d unknown region id(s))", path, len(issues.rejected_rows), len(unknown))
    logger.info("loaded %d accidents from %s", len(events), path)
    return events, issues
