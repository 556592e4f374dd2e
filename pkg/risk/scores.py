"""
Region x time risk tensors built from accident records.

A cell's risk is its severity-weighted accident count: every event adds its
severity level (1 slight, 2 serious, 3 fatal).
"""

from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from core.errors import DataError
from core.schemas import AccidentEvent, SparsitySummary


@dataclass(frozen=True)
class RiskTensor:
    values: np.ndarray  # (N, T_total)
    kind: Literal["raw", "pkde"] = "raw"
    interval_hours: int = 24

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError(f"risk tensor must be 2-D (regions x steps), got shape {self.values.shape}")

    @property
    def n_regions(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def slice_steps(self, start: int, stop: int) -> "RiskTensor":
        return RiskTensor(self.values[:, start:stop], self.kind, self.interval_hours)


def compute_risk_scores(
    events: Iterable[AccidentEvent],
    n_regions: int,
    n_steps: int,
    interval_hours: int = 24,
) -> RiskTensor:
    """values[n, t] = sum over severities i of (count of severity-i events in (n, t)) * i."""
    events = list(events)
    values = np.zeros((n_regions, n_steps), dtype=np.float64)
    if not events:
        return RiskTensor(values, "raw", interval_hours)

    regions = np.fromiter((e.region_index for e in events), dtype=np.int64, count=len(events))
    steps = np.fromiter((e.time_index for e in events), dtype=np.int64, count=len(events))
    severity = np.fromiter((e.severity for e in events), dtype=np.float64, count=len(events))

    bad = np.flatnonzero((regions < 0) | (regions >= n_regions) | (steps < 0) | (steps >= n_steps))
    if bad.size:
        i = int(bad[0])
        raise DataError(
            f"event #{i} out of bounds: region_index={events[i].region_index} (N={n_regions}), "
            f"time_index={events[i].time_index} (T={n_steps}); {bad.size} such events"
        )

    np.add.at(values, (regions, steps), severity)
    return RiskTensor(values, "raw", interval_hours)


def sparsity_summary(tensor: RiskTensor) -> SparsitySummary:
    values = tensor.values
    region_totals = values.sum(axis=1)
    return SparsitySummary(
        n_regions=tensor.n_regions,
        n_steps=tensor.n_steps,
        nonzero_fraction=float((values != 0).mean()) if values.size else 0.0,
        zero_region_fraction=float((region_totals == 0).mean()) if region_totals.size else 0.0,
        total_risk=float(region_totals.sum()),
        max_cell=float(values.max()) if values.size else 0.0,
    )
