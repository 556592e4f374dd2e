"""
dataset.manifest: the single entry point to an on-disk dataset.

A JSON document listing every source file (paths relative to the manifest),
the time origin, the interval length and the axis sizes.
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator

from core.errors import DataError
from ingest.extract import naive_utc

logger = logging.getLogger(__name__)

MANIFEST_NAME = "dataset.manifest"


class DatasetManifest(BaseModel):
    regions: str = Field(..., description="CSV `region_id`, defines the region index order")
    accidents: str = Field(..., description="CSV `region_id,timestamp,severity`")
    adjacency: str = Field(..., description="CSV `region_a,region_b`")
    poi: str
    road: str
    weather: str = Field(..., description="CSV `timestamp,<columns...>`")
    holidays: Optional[str] = Field(None, description="CSV `date`; generated from the holidays package when absent")
    time_origin: datetime
    interval_hours: int
    n_regions: int = Field(..., ge=1)
    n_steps: int = Field(..., ge=1)

    # set after loading, never serialised
    base_dir: Optional[Path] = Field(default=None, exclude=True)

    @field_validator("interval_hours")
    @classmethod
    def _interval(cls, value: int) -> int:
        if value not in (12, 24):
            raise ValueError("interval_hours must be 12 or 24")
        return value

    @field_validator("time_origin")
    @classmethod
    def _naive_origin(cls, value: datetime) -> datetime:
        # accident and weather stamps are naive UTC
        return naive_utc(value)

    def resolve(self, name: str) -> Optional[Path]:
        value = getattr(self, name)
        if value is None:
            return None
        path = Path(value)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DataError("manifest not found", path=str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc.msg}", path=str(path), line=exc.lineno) from exc
    try:
        manifest = DatasetManifest(**data)
    except ValidationError as exc:
        raise DataError(f"invalid manifest: {exc}", path=str(path)) from exc
    manifest.base_dir = path.parent
    logger.info("manifest loaded: %s (N=%d, T=%d, %dh)", path, manifest.n_regions, manifest.n_steps, manifest.interval_hours)
    return manifest


def save_manifest(manifest: DatasetManifest, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return path
