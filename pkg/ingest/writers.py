"""
CSV writers producing the on-disk dataset layout read by the loaders.
"""

import logging
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd

from core.schemas import AccidentEvent
from ingest.manifest import DatasetManifest, save_manifest
from risk.synthetic import SyntheticCity

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SEVERITY_LABELS = {1: "slight", 2: "serious", 3: "fatal"}


def write_regions(region_ids: Sequence[str], path: PathLike) -> Path:
    pd.DataFrame({"region_id": list(region_ids)}).to_csv(path, index=False)
    return Path(path)


def write_accidents(
    events: Sequence[AccidentEvent],
    region_ids: Sequence[str],
    path: PathLike,
    origin: datetime,
    interval_hours: int,
    times: Optional[Sequence[datetime]] = None,
) -> Path:
    """Timestamps default to the start of each event's interval."""
    if times is None:
        times = [origin + timedelta(hours=interval_hours * e.time_index) for e in events]
    frame = pd.DataFrame(
        {
            "region_id": [region_ids[e.region_index] for e in events],
            "timestamp": [t.isoformat() for t in times],
            "severity": [SEVERITY_LABELS[e.severity] for e in events],
        },
        columns=["region_id", "timestamp", "severity"],
    )
    frame.to_csv(path, index=False)
    return Path(path)


def write_edges(edges: Iterable[Tuple[str, str]], path: PathLike) -> Path:
    pd.DataFrame(list(edges), columns=["region_a", "region_b"]).to_csv(path, index=False)
    return Path(path)


def write_holidays(days: Iterable[date], path: PathLike) -> Path:
    pd.DataFrame({"date": [d.isoformat() for d in days]}).to_csv(path, index=False)
    return Path(path)


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    out = frame.copy()
    if "timestamp" in out.columns:
        out["timestamp"] = pd.to_datetime(out["timestamp"]).dt.strftime("%Y-%m-%dT%H:%M:%S")
    out.to_csv(path, index=False)
    return Path(path)


def write_city(city: SyntheticCity, out_dir: PathLike, with_holidays: bool = True) -> Path:
    """Write every source file of a synthetic city plus its manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    write_regions(city.region_ids, out_dir / "regions.csv")
    write_accidents(city.events, city.region_ids, out_dir / "accidents.csv", city.origin, city.interval_hours, city.event_times)
    write_edges(city.edges, out_dir / "adjacency.csv")
    write_frame(city.poi, out_dir / "poi.csv")
    write_frame(city.road, out_dir / "road.csv")
    write_frame(city.weather, out_dir / "weather.csv")
    holidays_name: Optional[str] = None
    if with_holidays:
        write_holidays(city.holidays, out_dir / "holidays.csv")
        holidays_name = "holidays.csv"

    manifest = DatasetManifest(
        regions="regions.csv",
        accidents="accidents.csv",
        adjacency="adjacency.csv",
        poi="poi.csv",
        road="road.csv",
        weather="weather.csv",
        holidays=holidays_name,
        time_origin=city.origin,
        interval_hours=city.interval_hours,
        n_regions=len(city.region_ids),
        n_steps=city.n_steps,
    )
    path = save_manifest(manifest, out_dir)
    logger.info("✅ synthetic city written to %s (%d regions, %d events)", out_dir, len(city.region_ids), len(city.events))
    return path


def source_files(out_dir: PathLike) -> List[Path]:
    return sorted(Path(out_dir).glob("*.csv"))
