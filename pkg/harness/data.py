"""
Dataset assembly for training and evaluation.

``ingest_dataset`` turns a manifest into aligned arrays; ``save_prepared`` /
``load_prepared`` persist them as one .npz. ``prepare_experiment`` fits the
training-period transforms (PKDE, meteorology standardization) and slices
windows for every split.
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

import numpy as np
import torch

from core.config import ExperimentConfig
from core.errors import DataError
from core.schemas import IngestIssues, SparsitySummary
from ingest.extract import load_accidents, load_adjacency, load_regions
from ingest.manifest import MANIFEST_NAME, load_manifest
from ingest.normalize import VARIANCE_FLOOR, build_external_features, load_urban_features
from risk.pkde import PkdeParams, apply_pkde, fit_pkde, scale_only
from risk.scores import RiskTensor, compute_risk_scores, sparsity_summary
from risk.windows import make_windows, split_boundaries, stack_windows

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
PREPARED_FORMAT = 1
SPLITS = ("train", "val", "test")


@dataclass
class PreparedDataset:
    region_ids: List[str]
    adjacency: np.ndarray  # (N, N)
    risk: RiskTensor  # raw, (N, T_total)
    poi: np.ndarray  # (N, d_P), standardized
    road: np.ndarray  # (N, d_R), standardized
    met: np.ndarray  # (T_total, d_M), city level, raw units
    cal: np.ndarray  # (T_total, d_C)
    time_origin: datetime
    interval_hours: int
    poi_columns: List[str] = field(default_factory=list)
    road_columns: List[str] = field(default_factory=list)
    met_columns: List[str] = field(default_factory=list)
    cal_columns: List[str] = field(default_factory=list)
    issues: IngestIssues = field(default_factory=IngestIssues)

    @property
    def n_regions(self) -> int:
        return len(self.region_ids)

    @property
    def n_steps(self) -> int:
        return self.risk.n_steps

    @property
    def sparsity(self) -> SparsitySummary:
        return sparsity_summary(self.risk)


# ------------------------- Ingestion -------------------------

def ingest_dataset(manifest_path: PathLike, config: ExperimentConfig) -> PreparedDataset:
    manifest = load_manifest(manifest_path)
    if manifest.interval_hours != config.interval_hours:
        logger.warning(
            "manifest interval %dh overrides config interval %dh", manifest.interval_hours, config.interval_hours
        )

    catalog = load_regions(manifest.resolve("regions"))
    if catalog.n_regions != manifest.n_regions:
        raise DataError(
            f"manifest declares {manifest.n_regions} regions, regions file lists {catalog.n_regions}",
            path=str(manifest.resolve("regions")),
        )
    catalog, issues = load_adjacency(manifest.resolve("adjacency"), catalog)
    events, accident_issues = load_accidents(
        manifest.resolve("accidents"), catalog, manifest.time_origin, manifest.interval_hours, manifest.n_steps
    )
    urban, urban_issues = load_urban_features(manifest.resolve("poi"), manifest.resolve("road"), catalog)
    externals, external_issues = build_external_features(
        manifest.resolve("weather"),
        manifest.resolve("holidays"),
        catalog,
        manifest.time_origin,
        manifest.interval_hours,
        manifest.n_steps,
        max_gap_hours=config.max_weather_gap_hours,
        holiday_country=config.holiday_country,
    )
    for extra in (accident_issues, urban_issues, external_issues):
        issues = issues.merge(extra)

    risk = compute_risk_scores(events, catalog.n_regions, manifest.n_steps, manifest.interval_hours)
    summary = sparsity_summary(risk)
    logger.info(
        "📦 dataset: N=%d T=%d, %.2f%% nonzero cells, %.1f%% regions without accidents",
        summary.n_regions,
        summary.n_steps,
        100 * summary.nonzero_fraction,
        100 * summary.zero_region_fraction,
    )
    return PreparedDataset(
        region_ids=catalog.region_ids,
        adjacency=catalog.adjacency,
        risk=risk,
        poi=urban.poi,
        road=urban.road,
        met=np.ascontiguousarray(externals.meteorology[0]),
        cal=np.ascontiguousarray(externals.calendar[0]),
        time_origin=manifest.time_origin,
        interval_hours=manifest.interval_hours,
        poi_columns=urban.poi_columns,
        road_columns=urban.road_columns,
        met_columns=externals.met_columns,
        cal_columns=externals.cal_columns,
        issues=issues,
    )


def save_prepared(dataset: PreparedDataset, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": PREPARED_FORMAT,
        "region_ids": dataset.region_ids,
        "time_origin": dataset.time_origin.isoformat(),
        "interval_hours": dataset.interval_hours,
        "poi_columns": dataset.poi_columns,
        "road_columns": dataset.road_columns,
        "met_columns": dataset.met_columns,
        "cal_columns": dataset.cal_columns,
        "issues": dataset.issues.model_dump(),
    }
    np.savez(
        path,
        risk=dataset.risk.values,
        adjacency=dataset.adjacency,
        poi=dataset.poi,
        road=dataset.road,
        met=dataset.met,
        cal=dataset.cal,
        meta=np.array(json.dumps(meta)),
    )
    return path


def load_prepared(path: PathLike) -> PreparedDataset:
    path = Path(path)
    if not path.exists():
        raise DataError("prepared dataset not found", path=str(path))
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        if meta.get("format") != PREPARED_FORMAT:
            raise DataError(f"unsupported prepared-dataset format {meta.get('format')}", path=str(path))
        return PreparedDataset(
            region_ids=list(meta["region_ids"]),
            adjacency=archive["adjacency"],
            risk=RiskTensor(archive["risk"], "raw", int(meta["interval_hours"])),
            poi=archive["poi"],
            road=archive["road"],
            met=archive["met"],
            cal=archive["cal"],
            time_origin=datetime.fromisoformat(meta["time_origin"]),
            interval_hours=int(meta["interval_hours"]),
            poi_columns=meta["poi_columns"],
            road_columns=meta["road_columns"],
            met_columns=meta["met_columns"],
            cal_columns=meta["cal_columns"],
            issues=IngestIssues(**meta["issues"]),
        )


def open_dataset(config: ExperimentConfig, path: Optional[PathLike] = None) -> PreparedDataset:
    """Prepared .npz if given one, otherwise ingest from a manifest (file or directory)."""
    path = path or config.dataset_path
    if path is None:
        raise DataError("no dataset_path configured")
    path = Path(path)
    if path.suffix == ".npz":
        return load_prepared(path)
    if path.is_dir() or path.name == MANIFEST_NAME or path.suffix == ".manifest":
        return ingest_dataset(path, config)
    raise DataError("dataset_path must be a manifest, a dataset directory or a prepared .npz", path=str(path))


# ------------------------- Experiment arrays -------------------------

@dataclass
class SplitArrays:
    inputs: np.ndarray  # (W, N, T), transformed
    targets: np.ndarray  # (W, N, tau), transformed
    raw_targets: np.ndarray  # (W, N, tau)
    met: np.ndarray  # (W, N, T, d_M), standardized
    cal: np.ndarray  # (W, N, T, d_C)
    starts: np.ndarray  # (W,)

    def __len__(self) -> int:
        return len(self.starts)


@dataclass
class ExperimentData:
    dataset: PreparedDataset
    pkde: Optional[PkdeParams]
    scale: float
    boundaries: tuple
    splits: Dict[str, SplitArrays]
    train_totals: np.ndarray  # (N,) raw training-period risk per region
    mean_history: np.ndarray  # (N, T) training-window mean inputs
    met_stats: Dict[str, List[float]] = field(default_factory=dict)

    def split(self, name: str) -> SplitArrays:
        if name not in self.splits:
            raise DataError(f"split '{name}' holds no windows")
        return self.splits[name]


def standardize_met(met: np.ndarray, train_end: int) -> tuple:
    reference = met[:train_end] if train_end > 0 else met
    mean = reference.mean(axis=0)
    std = np.sqrt(np.maximum(reference.var(axis=0), VARIANCE_FLOOR))
    return (met - mean) / std, mean, std


def prepare_experiment(dataset: PreparedDataset, config: ExperimentConfig) -> ExperimentData:
    n, total = dataset.n_regions, dataset.n_steps
    train_end, val_end = split_boundaries(total, config.train_ratio, config.val_ratio)
    train_slice = dataset.risk.slice_steps(0, train_end)

    pkde = fit_pkde(train_slice, floor=config.pkde_floor, delta=config.pkde_delta)
    if config.use_pkde:
        transformed = apply_pkde(dataset.risk, pkde)
    else:
        transformed = scale_only(dataset.risk, pkde.scale)
        logger.info("PKDE disabled: max-scaling only, zero cells stay 0")

    met, met_mean, met_std = standardize_met(dataset.met, train_end)
    met_full = np.broadcast_to(met[None], (n,) + met.shape)
    cal_full = np.broadcast_to(dataset.cal[None], (n,) + dataset.cal.shape)

    windows = make_windows(
        transformed,
        (met_full, cal_full),
        config.input_steps,
        config.horizon,
        split=(config.train_ratio, config.val_ratio),
    )
    splits: Dict[str, SplitArrays] = {}
    for name in SPLITS:
        if not windows[name]:
            logger.warning("split %s has no windows", name)
            continue
        stacked = stack_windows(windows[name])
        target_idx = stacked["starts"][:, None] + config.input_steps + np.arange(config.horizon)[None, :]
        raw_targets = dataset.risk.values[:, target_idx].transpose(1, 0, 2)
        splits[name] = SplitArrays(
            inputs=stacked["inputs"].astype(np.float32),
            targets=stacked["targets"].astype(np.float32),
            raw_targets=raw_targets,
            met=stacked["met"].astype(np.float32),
            cal=stacked["cal"].astype(np.float32),
            starts=stacked["starts"],
        )
    if "train" not in splits:
        raise DataError(
            f"no training windows: {train_end} training steps, need at least {config.input_steps + config.horizon}"
        )

    counts = {name: len(arrays) for name, arrays in splits.items()}
    logger.info("windows per split: %s (boundaries %d / %d)", counts, train_end, val_end)
    return ExperimentData(
        dataset=dataset,
        pkde=pkde,
        scale=pkde.scale,
        boundaries=(train_end, val_end),
        splits=splits,
        train_totals=train_slice.values.sum(axis=1),
        mean_history=splits["train"].inputs.mean(axis=0),
        met_stats={"mean": met_mean.tolist(), "std": met_std.tolist()},
    )


# ------------------------- Batching -------------------------

def batch_order(n_windows: int, batch_size: int, seed: int, epoch: int, shuffle: bool = True) -> List[np.ndarray]:
    """Window indices per batch; the permutation depends only on (seed, epoch)."""
    if shuffle:
        generator = torch.Generator().manual_seed(seed + epoch)
        order = torch.randperm(n_windows, generator=generator).numpy()
    else:
        order = np.arange(n_windows)
    return [order[i:i + batch_size] for i in range(0, n_windows, batch_size)]


def make_batch(arrays: SplitArrays, indices: np.ndarray, dtype: torch.dtype = torch.float32) -> Dict[str, torch.Tensor]:
    return {
        "inputs": torch.as_tensor(arrays.inputs[indices], dtype=dtype),
        "targets": torch.as_tensor(arrays.targets[indices], dtype=dtype),
        "met": torch.as_tensor(arrays.met[indices], dtype=dtype),
        "cal": torch.as_tensor(arrays.cal[indices], dtype=dtype),
        "indices": torch.as_tensor(indices),
    }


def iterate_batches(
    arrays: SplitArrays, batch_size: int, seed: int = 0, epoch: int = 0, shuffle: bool = False
) -> Iterator[Dict[str, torch.Tensor]]:
    for indices in batch_order(len(arrays), batch_size, seed, epoch, shuffle):
        yield make_batch(arrays, indices)
