import json
import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "HYPERRISK_"
ALLOWED_BATCH_SIZES = (1, 2, 4, 8, 16)


class ExperimentConfig(BaseSettings):
    """Every hyperparameter and path of one experiment.

    Precedence (highest first): explicit overrides, HYPERRISK_* environment
    variables, the JSON config document, field defaults.
    """

    # --- Data ---
    dataset_path: Optional[str] = Field(default=None, description="dataset.manifest or prepared .npz")
    output_dir: str = Field(default="runs/default")
    interval_hours: int = Field(default=24)
    holiday_country: str = Field(default="GB")
    max_weather_gap_hours: int = Field(default=72, ge=1)

    # --- Windows / split ---
    input_steps: int = Field(default=12, ge=3, description="T, input window length")
    horizon: int = Field(default=6, ge=1, description="tau, forecast steps")
    train_ratio: float = Field(default=0.8, gt=0, lt=1)
    val_ratio: float = Field(default=0.1, ge=0, lt=1)

    # --- PKDE ---
    pkde_floor: float = Field(default=2.0 ** -10, gt=0, lt=1)
    pkde_delta: float = Field(default=0.05, gt=0, lt=1)

    # --- Model ---
    embed_dim: int = Field(default=32, ge=2)
    heads: int = Field(default=8, ge=1)
    layers: int = Field(default=2, ge=1)
    k: int = Field(default=40, ge=1, description="pairwise top-k per row")
    hyperedge_ratio: float = Field(default=0.1, gt=0, le=1)
    k_members: int = Field(default=40, ge=1)
    temporal_kernel: int = Field(default=3, ge=1)
    head_hidden: int = Field(default=64, ge=1)
    dropout: float = Field(default=0.0, ge=0, lt=1)

    # --- Objective ---
    lambda1: float = Field(default=0.1, ge=0)
    lambda2: float = Field(default=0.001, ge=0)
    temperature: float = Field(default=1.0, gt=0)

    # --- Optimisation ---
    learning_rate: float = Field(default=0.001, gt=0)
    batch_size: int = Field(default=8)
    max_epochs: int = Field(default=500, ge=1)
    patience: int = Field(default=25, ge=1)
    grad_clip: Optional[float] = Field(default=5.0)
    seed: int = Field(default=42)
    num_threads: int = Field(default=1, ge=1)
    prefetch: int = Field(default=0, ge=0, description="batch prefetch queue depth, 0 disables")
    check_structures: bool = Field(default=True)
    log_every: int = Field(default=1, ge=1)

    # --- Evaluation / export ---
    k_fraction: float = Field(default=0.2, gt=0, le=1)
    top_members: int = Field(default=5, ge=1)

    # --- Ablation flags ---
    use_pkde: bool = True
    use_contrastive: bool = True
    use_hypergraph: bool = True
    use_attention_fusion: bool = True
    use_poi: bool = True
    use_road: bool = True
    dynamic_temporal_view: bool = True
    topk_axis: Literal["column", "row"] = "column"

    model_config = SettingsConfigDict(env_prefix=ENV_PREFIX, extra="forbid", validate_default=True)

    @classmethod
    def settings_customise_sources(cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings):
        # environment beats the config document
        return env_settings, init_settings

    @field_validator("interval_hours")
    @classmethod
    def _interval(cls, value: int) -> int:
        if value not in (12, 24):
            raise ValueError("interval_hours must be 12 or 24")
        return value

    @field_validator("batch_size")
    @classmethod
    def _batch(cls, value: int) -> int:
        if value not in ALLOWED_BATCH_SIZES:
            raise ValueError(f"batch_size must be one of {ALLOWED_BATCH_SIZES}")
        return value

    @field_validator("grad_clip")
    @classmethod
    def _clip(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value <= 0:
            raise ValueError("grad_clip must be positive or null")
        return value

    @model_validator(mode="after")
    def _cross_field(self) -> "ExperimentConfig":
        if self.train_ratio + self.val_ratio >= 1:
            raise ValueError("train_ratio + val_ratio must be < 1")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        return self

    @property
    def views(self):
        """Active views in fixed order."""
        active = ["S", "T"]
        if self.use_poi:
            active.append("P")
        if self.use_road:
            active.append("R")
        return tuple(active)

    def n_hyperedges(self, n_regions: int) -> int:
        return max(1, int(round(self.hyperedge_ratio * n_regions)))


def _build(data: Dict[str, Any], source: str) -> ExperimentConfig:
    try:
        return ExperimentConfig(**data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config ({source}): {exc}") from exc


def apply_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Explicit overrides win over every other source; None means "not given"."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if not overrides:
        return config
    try:
        return ExperimentConfig.model_validate({**config.model_dump(), **overrides})
    except ValidationError as exc:
        raise ConfigError(f"invalid override: {exc}") from exc


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> ExperimentConfig:
    """Load a JSON config document, apply env then explicit overrides."""
    data: Dict[str, Any] = {}
    source = "defaults"
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        source = str(path)

    return apply_overrides(_build(data, source), **overrides)


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Rebuild a config snapshot (e.g. from a checkpoint) without env merging."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config snapshot: {exc}") from exc


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.model_dump(), indent=2, sort_keys=True), encoding="utf-8")
    logger.debug("config written to %s", path)
    return path
