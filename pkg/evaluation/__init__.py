# Evaluation package
from evaluation.baseline import persistence_baseline
from evaluation.metrics import build_report, grouped_errors, mae, recall_at_k, region_errors, region_groups, rmse

__all__ = [
    "persistence_baseline",
    "build_report",
    "grouped_errors",
    "mae",
    "recall_at_k",
    "region_errors",
    "region_groups",
    "rmse",
]
