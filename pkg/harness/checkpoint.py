"""
Checkpoint archive: parameters, optimizer state, progress counters and the
resolved config, saved with torch.save using tensors and primitives only.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import torch

from core.config import ExperimentConfig, config_from_dict, save_config
from core.errors import DataError, DimensionMismatchError
from core.schemas import CheckpointMeta
from model.network import ModelDims

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

# config fields that change the parameter layout
ARCHITECTURE_FIELDS = (
    "embed_dim",
    "heads",
    "layers",
    "hyperedge_ratio",
    "temporal_kernel",
    "head_hidden",
    "use_hypergraph",
    "use_attention_fusion",
    "use_poi",
    "use_road",
)
BEST_NAME = "best.pt"
LAST_NAME = "last.pt"

PathLike = Union[str, Path]


def save_checkpoint(
    path: PathLike,
    model: torch.nn.Module,
    optimizer: Optional[torch.optim.Optimizer],
    config: ExperimentConfig,
    dims: ModelDims,
    meta: CheckpointMeta,
    pkde: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    archive = {
        "format_version": FORMAT_VERSION,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "meta": meta.model_dump(),
        "config": config.model_dump(),
        "dims": dims.model_dump(),
        "pkde": pkde,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(archive, tmp)
    tmp.replace(path)
    save_config(config, path.parent / "config.json")
    logger.debug("checkpoint written: %s (epoch %d)", path, meta.epoch)
    return path


def load_checkpoint(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise DataError("checkpoint not found", path=str(path))
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise DataError(f"unreadable checkpoint: {exc}", path=str(path)) from exc
    version = archive.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format {version} (expected {FORMAT_VERSION})", path=str(path))
    archive["meta"] = CheckpointMeta(**archive["meta"])
    archive["dims"] = ModelDims(**archive["dims"])
    return archive


def checkpoint_config(archive: Dict[str, Any]) -> ExperimentConfig:
    return config_from_dict(archive["config"])


def check_dims(expected: ModelDims, actual: ModelDims) -> None:
    """Raise on the first axis where a checkpoint and the dataset disagree."""
    labels = {
        "n_regions": "region",
        "input_steps": "time (input steps)",
        "horizon": "horizon",
        "met_dim": "meteorology features",
        "cal_dim": "calendar features",
        "poi_dim": "POI features",
        "road_dim": "road features",
    }
    for name, label in labels.items():
        want, got = getattr(expected, name), getattr(actual, name)
        if want != got:
            raise DimensionMismatchError(label, want, got)


def architecture_changes(saved: Dict[str, Any], config: ExperimentConfig) -> List[str]:
    """Architecture fields where a checkpoint's config snapshot and ``config`` differ."""
    return [
        f"{name}: {saved[name]!r} -> {getattr(config, name)!r}"
        for name in ARCHITECTURE_FIELDS
        if name in saved and saved[name] != getattr(config, name)
    ]
