"""
Artifact export: learned graph / hypergraph triplets, hyperedge member lists,
predictions, step metrics, per-region errors and optional plots.
"""

import logging
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
import torch

from core.config import ExperimentConfig
from evaluation.metrics import region_errors
from evaluation.report import plot_step_metrics, write_report
from harness.data import ExperimentData
from harness.trainer import evaluate_model, predict_arrays
from model.graphs import ViewStructures
from model.network import RiskHypergraphNet
from risk.pkde import to_raw_scale

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def triplets(matrix: np.ndarray) -> pd.DataFrame:
    rows, cols = np.nonzero(matrix)
    return pd.DataFrame({"row": rows, "col": cols, "value": matrix[rows, cols]}, columns=["row", "col", "value"])


def hyperedge_members(H: np.ndarray, region_ids: Sequence[str], top: int = 5) -> pd.DataFrame:
    """Most relevant regions per hyperedge (nonzero weights only, ties to the lower index)."""
    records = []
    for edge in range(H.shape[1]):
        column = H[:, edge]
        order = np.argsort(-column, kind="stable")[:top]
        for rank, region in enumerate(order, start=1):
            if column[region] <= 0:
                break
            records.append({"hyperedge": edge, "rank": rank, "region_id": region_ids[region], "weight": float(column[region])})
    return pd.DataFrame(records, columns=["hyperedge", "rank", "region_id", "weight"])


def hyperedge_summary(H: np.ndarray, view: str) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "view": view,
            "hyperedge": np.arange(H.shape[1]),
            "size": (H > 0).sum(axis=0),
            "total_weight": H.sum(axis=0),
        }
    )


@torch.no_grad()
def export_structures(structures: ViewStructures, region_ids: Sequence[str], out_dir: Path, top: int = 5) -> List[Path]:
    written = []
    summaries = []
    for view, graph in structures.pairwise.items():
        A = graph.A.detach()
        A = (A[0] if A.dim() == 3 else A).cpu().numpy()
        path = out_dir / f"graph_{view}.csv"
        triplets(A).to_csv(path, index=False)
        written.append(path)
    for view, hyper in structures.hyper.items():
        H = hyper.H.detach()[0].cpu().numpy()
        path = out_dir / f"hypergraph_{view}.csv"
        triplets(H).to_csv(path, index=False)
        members = out_dir / f"hyperedge_members_{view}.csv"
        hyperedge_members(H, region_ids, top).to_csv(members, index=False)
        written += [path, members]
        summaries.append(hyperedge_summary(H, view))
    if summaries:
        path = out_dir / "hyperedge_summary.csv"
        pd.concat(summaries, ignore_index=True).to_csv(path, index=False)
        written.append(path)
    return written


def predictions_frame(predicted: np.ndarray, actual: np.ndarray, starts: np.ndarray, region_ids: Sequence[str], input_steps: int) -> pd.DataFrame:
    """Long format: one row per (window, region, step)."""
    W, N, tau = predicted.shape
    window, region, step = np.meshgrid(np.arange(W), np.arange(N), np.arange(tau), indexing="ij")
    return pd.DataFrame(
        {
            "window_start": starts[window.ravel()],
            "target_index": starts[window.ravel()] + input_steps + step.ravel(),
            "region_id": np.asarray(region_ids)[region.ravel()],
            "step": step.ravel() + 1,
            "predicted": predicted.ravel(),
            "actual": actual.ravel(),
        }
    )


def write_predictions(model: RiskHypergraphNet, data: ExperimentData, config: ExperimentConfig, split: str, path: PathLike) -> Path:
    arrays = data.split(split)
    predicted = to_raw_scale(predict_arrays(model, arrays, config.batch_size), data.scale)
    frame = predictions_frame(predicted, arrays.raw_targets, arrays.starts, data.dataset.region_ids, config.input_steps)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info("predictions for %s (%d windows) written to %s", split, len(arrays), path)
    return path


def export_artifacts(
    model: RiskHypergraphNet,
    data: ExperimentData,
    config: ExperimentConfig,
    out_dir: PathLike,
    split: str = "test",
    plots: bool = False,
) -> List[Path]:
    """Structures are taken at the last window of ``split`` (it drives the dynamic temporal view)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if split not in data.splits:
        fallback = [name for name in ("test", "val", "train") if name in data.splits][0]
        logger.warning("split %s has no windows, exporting %s instead", split, fallback)
        split = fallback
    arrays = data.split(split)
    region_ids = data.dataset.region_ids

    model.eval()
    history = torch.as_tensor(arrays.inputs[-1:])
    with torch.no_grad():
        structures = model.structures(history)
    written = export_structures(structures, region_ids, out_dir, config.top_members)

    written.append(write_predictions(model, data, config, split, out_dir / f"predictions_{split}.csv"))
    report = evaluate_model(model, data, split, config.batch_size)
    written.append(write_report(report, out_dir, stem="metrics"))

    predicted = to_raw_scale(predict_arrays(model, arrays, config.batch_size), data.scale)
    path = out_dir / "region_error.csv"
    region_errors(arrays.raw_targets, predicted, region_ids).to_csv(path, index=False)
    written.append(path)

    if plots:
        written.append(plot_step_metrics(report, out_dir / f"step_metrics_{split}.png"))
    logger.info("📤 exported %d artifact(s) to %s", len(written), out_dir)
    return written

