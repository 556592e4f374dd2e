"""
Raw-scale risk metrics.

Arrays are (windows, regions, horizon). 2-D (regions, horizon) inputs are
treated as a single window.
"""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from core.schemas import EvalReport, GroupMetrics, RecallResult, StepMetrics

logger = logging.getLogger(__name__)


def _as_windows(Y: np.ndarray, Y_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    Y = np.asarray(Y, dtype=np.float64)
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    if Y.shape != Y_hat.shape:
        raise ValueError(f"shape mismatch: targets {Y.shape} vs predictions {Y_hat.shape}")
    if Y.ndim == 2:
        Y, Y_hat = Y[None], Y_hat[None]
    if Y.ndim != 3:
        raise ValueError(f"expected (windows, regions, horizon) arrays, got {Y.ndim}-D")
    return Y, Y_hat


def step_mse(Y: np.ndarray, Y_hat: np.ndarray) -> np.ndarray:
    Y, Y_hat = _as_windows(Y, Y_hat)
    return ((Y - Y_hat) ** 2).mean(axis=(0, 1))


def rmse(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    """Root of the mean of per-step MSEs."""
    return float(np.sqrt(step_mse(Y, Y_hat).mean()))


def mae(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    Y, Y_hat = _as_windows(Y, Y_hat)
    return float(np.abs(Y - Y_hat).mean())


def top_k_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values; ties go to the lower index."""
    return np.argsort(-values, kind="stable")[:k]


def recall_sets(actual: np.ndarray, predicted: np.ndarray, k: int) -> Tuple[set, set]:
    """(R, R̂) for one step: R is restricted to strictly positive actual risk."""
    predicted_set = set(top_k_indices(predicted, k).tolist())
    positive = np.flatnonzero(actual > 0)
    ranked = positive[np.argsort(-actual[positive], kind="stable")]
    return set(ranked[:k].tolist()), predicted_set


def recall_at_k(Y: np.ndarray, Y_hat: np.ndarray, k_fraction: float = 0.2) -> RecallResult:
    """Mean |R ∩ R̂| / |R| pooled over every (window, step) pair with a nonempty R.

    Steps with more accident windows weigh more here. ``build_report`` instead
    averages the per-step values from ``per_step_metrics``, so its
    ``recall_at_k`` can differ from this pooled figure on the same arrays.
    """
    if not 0 < k_fraction <= 1:
        raise ValueError("k_fraction must lie in (0, 1]")
    Y, Y_hat = _as_windows(Y, Y_hat)
    n_windows, n_regions, horizon = Y.shape
    k = max(1, int(round(k_fraction * n_regions)))

    scores = []
    skipped = 0
    for w in range(n_windows):
        for j in range(horizon):
            actual, predicted = recall_sets(Y[w, :, j], Y_hat[w, :, j], k)
            if not actual:
                skipped += 1
                continue
            scores.append(len(actual & predicted) / len(actual))
    value = float(np.mean(scores)) if scores else None
    return RecallResult(value=value, n_retained=len(scores), n_skipped=skipped)


def per_step_metrics(Y: np.ndarray, Y_hat: np.ndarray, k_fraction: float = 0.2) -> List[StepMetrics]:
    Y, Y_hat = _as_windows(Y, Y_hat)
    steps = []
    for j in range(Y.shape[2]):
        recall = recall_at_k(Y[:, :, j:j + 1], Y_hat[:, :, j:j + 1], k_fraction)
        steps.append(
            StepMetrics(
                step=j + 1,
                rmse=rmse(Y[:, :, j:j + 1], Y_hat[:, :, j:j + 1]),
                mae=mae(Y[:, :, j:j + 1], Y_hat[:, :, j:j + 1]),
                recall_at_k=recall.value,
                n_retained=recall.n_retained,
            )
        )
    return steps


# ------------------------- Region groups -------------------------

def region_groups(train_totals: np.ndarray) -> Dict[str, np.ndarray]:
    """Split regions by training-period accident totals.

    non-risk: no training accidents; low-risk / high-risk: below / at-or-above
    the median of the nonzero totals.
    """
    totals = np.asarray(train_totals, dtype=np.float64)
    nonzero = totals > 0
    groups = {"non-risk": np.flatnonzero(~nonzero)}
    if nonzero.any():
        median = float(np.median(totals[nonzero]))
        groups["low-risk"] = np.flatnonzero(nonzero & (totals < median))
        groups["high-risk"] = np.flatnonzero(nonzero & (totals >= median))
    else:
        groups["low-risk"] = np.array([], dtype=int)
        groups["high-risk"] = np.array([], dtype=int)
    return groups


def grouped_errors(Y: np.ndarray, Y_hat: np.ndarray, groups: Dict[str, np.ndarray]) -> List[GroupMetrics]:
    Y, Y_hat = _as_windows(Y, Y_hat)
    out = []
    for name in ("non-risk", "low-risk", "high-risk"):
        members = groups.get(name, np.array([], dtype=int))
        if len(members) == 0:
            out.append(GroupMetrics(group=name, n_regions=0))
            continue
        out.append(
            GroupMetrics(
                group=name,
                n_regions=len(members),
                rmse=rmse(Y[:, members], Y_hat[:, members]),
                mae=mae(Y[:, members], Y_hat[:, members]),
            )
        )
    return out


def region_errors(Y: np.ndarray, Y_hat: np.ndarray, region_ids: Optional[List[str]] = None) -> pd.DataFrame:
    """Per-region RMSE / MAE over windows and steps."""
    Y, Y_hat = _as_windows(Y, Y_hat)
    diff = Y - Y_hat
    frame = pd.DataFrame(
        {
            "region_id": region_ids if region_ids is not None else [str(i) for i in range(Y.shape[1])],
            "rmse": np.sqrt((diff ** 2).mean(axis=(0, 2))),
            "mae": np.abs(diff).mean(axis=(0, 2)),
        }
    )
    return frame


def build_report(
    Y: np.ndarray,
    Y_hat: np.ndarray,
    k_fraction: float = 0.2,
    split: str = "test",
    source: str = "model",
    groups: Optional[Dict[str, np.ndarray]] = None,
) -> EvalReport:
    """Aggregate metrics are means over the per-step metrics."""
    Y, Y_hat = _as_windows(Y, Y_hat)
    steps = per_step_metrics(Y, Y_hat, k_fraction)
    recalls = [s.recall_at_k for s in steps if s.recall_at_k is not None]
    if not recalls:
        logger.warning("recall@k undefined on %s: no step had a positive-risk region", split)
    report = EvalReport(
        rmse=rmse(Y, Y_hat),
        mae=mae(Y, Y_hat),
        recall_at_k=float(np.mean(recalls)) if recalls else None,
        k_fraction=k_fraction,
        per_step=steps,
        n_windows=Y.shape[0],
        split=split,
        source=source,
        group_metrics=grouped_errors(Y, Y_hat, groups) if groups is not None else [],
    )
    return report
