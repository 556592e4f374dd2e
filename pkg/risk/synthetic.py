"""
Synthetic grid city for desk-scale runs.

Regions sit on the smallest square grid that holds them (row-major, rook
adjacency). Planted hotspot regions emit Poisson accidents whose hourly rate
follows a daily cycle with morning and evening peaks; every other region is
accident-free. POI and road attributes are shifted upwards on hotspots.
"""

import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from core.errors import DataError
from core.schemas import AccidentEvent

logger = logging.getLogger(__name__)

DEFAULT_ORIGIN = datetime(2021, 1, 1)
POI_COLUMNS = ["retail", "schools", "hospitals", "leisure"]
ROAD_COLUMNS = ["junction_density", "mean_width", "lanes"]
WEATHER_COLUMNS = ["temperature", "visibility", "snow_depth"]
SEVERITY_PROBS = (0.85, 0.14, 0.01)


@dataclass
class SyntheticCity:
    region_ids: List[str]
    events: List[AccidentEvent]
    event_times: List[datetime]
    edges: List[Tuple[str, str]]
    poi: pd.DataFrame
    road: pd.DataFrame
    weather: pd.DataFrame
    holidays: List[date]
    origin: datetime
    interval_hours: int
    n_steps: int
    metadata: Dict = field(default_factory=dict)

    @property
    def hotspots(self) -> List[int]:
        return list(self.metadata.get("hotspot_indices", []))


def grid_edges(n_regions: int) -> Tuple[List[Tuple[int, int]], int]:
    """Rook edges over the first n_regions cells of a ceil(sqrt(N)) square grid."""
    side = max(1, math.ceil(math.sqrt(n_regions)))
    edges = []
    for i in range(n_regions):
        row, col = divmod(i, side)
        right = i + 1
        down = i + side
        if col + 1 < side and right < n_regions:
            edges.append((i, right))
        if down < n_regions:
            edges.append((i, down))
    return edges, side


def _hourly_profile() -> np.ndarray:
    hours = np.arange(24)
    peaks = np.exp(-0.5 * ((hours - 8) / 1.5) ** 2) + np.exp(-0.5 * ((hours - 17) / 2.0) ** 2)
    profile = 0.3 + peaks
    return profile / profile.mean()


def generate_synthetic_city(
    n_regions: int,
    n_steps: int,
    n_hotspots: int,
    seed: int,
    interval_hours: int = 24,
    origin: datetime = DEFAULT_ORIGIN,
    daily_rate: float = 1.2,
) -> SyntheticCity:
    if n_regions < 1 or n_steps < 1:
        raise DataError("synthetic city needs at least one region and one step")
    if not 0 <= n_hotspots <= n_regions:
        raise DataError(f"n_hotspots={n_hotspots} must lie in [0, n_regions={n_regions}]")

    rng = np.random.default_rng(seed)
    region_ids = [f"r{i:03d}" for i in range(n_regions)]
    index_edges, side = grid_edges(n_regions)
    hotspots = np.sort(rng.choice(n_regions, size=n_hotspots, replace=False)) if n_hotspots else np.array([], dtype=int)
    is_hot = np.zeros(n_regions, dtype=bool)
    is_hot[hotspots] = True

    # --- accidents ---
    total_hours = n_steps * interval_hours
    profile = _hourly_profile()
    hour_of_day = (np.arange(total_hours) + origin.hour) % 24
    intensity = rng.uniform(0.6, 1.4, size=n_regions)
    events: List[AccidentEvent] = []
    times: List[datetime] = []
    for region in hotspots:
        rate = daily_rate / 24.0 * intensity[region] * profile[hour_of_day]
        counts = rng.poisson(rate)
        for hour in np.flatnonzero(counts):
            for _ in range(int(counts[hour])):
                minute = int(rng.integers(0, 60))
                severity = int(rng.choice(3, p=SEVERITY_PROBS)) + 1
                events.append(
                    AccidentEvent(region_index=int(region), time_index=int(hour) // interval_hours, severity=severity)
                )
                times.append(origin + timedelta(hours=int(hour), minutes=minute))

    # --- urban features ---
    poi = pd.DataFrame(
        rng.gamma(2.0, 1.0, size=(n_regions, len(POI_COLUMNS))) + 3.0 * is_hot[:, None],
        columns=POI_COLUMNS,
    )
    poi.insert(0, "region_id", region_ids)
    road = pd.DataFrame(
        rng.normal(0.0, 1.0, size=(n_regions, len(ROAD_COLUMNS))) + 2.0 * is_hot[:, None],
        columns=ROAD_COLUMNS,
    )
    road.insert(0, "region_id", region_ids)

    # --- weather (hourly, city level) ---
    stamps = pd.date_range(origin, periods=total_hours, freq="h")
    day_phase = 2 * np.pi * np.arange(total_hours) / 24.0
    year_phase = 2 * np.pi * np.arange(total_hours) / (24.0 * 365.0)
    weather = pd.DataFrame(
        {
            "timestamp": stamps,
            "temperature": 10 - 8 * np.cos(year_phase) + 4 * np.sin(day_phase) + rng.normal(0, 1, total_hours),
            "visibility": np.clip(20 + rng.normal(0, 5, total_hours), 0.5, None),
            "snow_depth": np.clip(rng.normal(-2, 1.5, total_hours), 0, None),
        }
    )

    # --- holidays ---
    n_days = max(1, total_hours // 24)
    n_holidays = min(3, n_days)
    holiday_days = np.sort(rng.choice(n_days, size=n_holidays, replace=False))
    holidays = [(origin + timedelta(days=int(d))).date() for d in holiday_days]

    metadata = {
        "seed": seed,
        "grid_side": side,
        "padding_cells": side * side - n_regions,
        "padding_note": "trailing cells of the square grid carry no region" if side * side > n_regions else "",
        "hotspot_indices": [int(h) for h in hotspots],
        "hotspot_ids": [region_ids[int(h)] for h in hotspots],
        "n_events": len(events),
    }
    if metadata["padding_cells"]:
        logger.info("synthetic city: %d regions on a %dx%d grid (%d padding cells)", n_regions, side, side, metadata["padding_cells"])

    return SyntheticCity(
        region_ids=region_ids,
        events=events,
        event_times=times,
        edges=[(region_ids[a], region_ids[b]) for a, b in index_edges],
        poi=poi,
        road=road,
        weather=weather,
        holidays=holidays,
        origin=origin,
        interval_hours=interval_hours,
        n_steps=n_steps,
        metadata=metadata,
    )
