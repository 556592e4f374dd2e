# Core package
from core.config import ExperimentConfig, load_config, save_config
from core.errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    HyperRiskError,
    NumericalError,
    StructureViolationError,
)

__all__ = [
    "ExperimentConfig",
    "load_config",
    "save_config",
    "ConfigError",
    "DataError",
    "DimensionMismatchError",
    "HyperRiskError",
    "NumericalError",
    "StructureViolationError",
]
