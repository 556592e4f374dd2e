"""
Seeded training loop with early stopping, checkpointing and the per-step
metrics log; plus split-level prediction and evaluation.
"""

import csv
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch

from apps.worker.prefetch import prefetched
from core.config import ExperimentConfig
from core.errors import DataError, NumericalError
from core.schemas import CheckpointMeta, EvalReport, LossBreakdown
from evaluation.baseline import persistence_baseline
from evaluation.metrics import build_report, region_groups, rmse
from harness.checkpoint import (
    BEST_NAME,
    LAST_NAME,
    architecture_changes,
    check_dims,
    load_checkpoint,
    save_checkpoint,
)
from harness.data import ExperimentData, SplitArrays, batch_order, make_batch
from model.network import ModelDims, RiskHypergraphNet
from model.objectives import joint_loss
from risk.pkde import to_raw_scale

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["step", "epoch", "mse", "contrastive", "l2", "total", "val_rmse"]

PathLike = Union[str, Path]


def seed_everything(seed: int, num_threads: int = 1) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.set_num_threads(num_threads)
    torch.use_deterministic_algorithms(True, warn_only=True)


def model_dims(data: ExperimentData, config: ExperimentConfig) -> ModelDims:
    dataset = data.dataset
    return ModelDims(
        n_regions=dataset.n_regions,
        input_steps=config.input_steps,
        horizon=config.horizon,
        met_dim=dataset.met.shape[1],
        cal_dim=dataset.cal.shape[1],
        poi_dim=dataset.poi.shape[1],
        road_dim=dataset.road.shape[1],
    )


def build_model(config: ExperimentConfig, data: ExperimentData) -> RiskHypergraphNet:
    seed_everything(config.seed, config.num_threads)
    dataset = data.dataset
    model = RiskHypergraphNet(config, model_dims(data, config), dataset.adjacency, dataset.poi, dataset.road)
    model.learner.set_static_history(torch.as_tensor(data.mean_history))
    return model


@dataclass
class TrainResult:
    epochs_run: int
    best_epoch: int
    best_val_rmse: Optional[float]
    stopped_early: bool
    best_path: Path
    last_path: Path
    global_step: int


class Trainer:
    def __init__(self, config: ExperimentConfig, data: ExperimentData, output_dir: Optional[PathLike] = None):
        self.config = config
        self.data = data
        self.output_dir = Path(output_dir or config.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.model = build_model(config, data)
        self.dims = self.model.dims
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate)
        self.metrics_path = self.output_dir / "metrics.csv"

        self.epoch = 0
        self.global_step = 0
        self.best_val: Optional[float] = None
        self.best_epoch = 0
        self.epochs_without_improvement = 0

    # ------------------------- State -------------------------

    def _meta(self) -> CheckpointMeta:
        return CheckpointMeta(
            format_version=1,
            epoch=self.epoch,
            best_val_rmse=self.best_val,
            epochs_without_improvement=self.epochs_without_improvement,
            global_step=self.global_step,
            dims=self.dims.model_dump(),
        )

    def save(self, name: str) -> Path:
        pkde = self.data.pkde.to_dict() if self.data.pkde is not None else None
        return save_checkpoint(
            self.output_dir / name, self.model, self.optimizer, self.config, self.dims, self._meta(), pkde
        )

    def resume(self, path: PathLike) -> None:
        archive = load_checkpoint(path)
        changes = architecture_changes(archive["config"], self.config)
        if changes:
            raise DataError(f"cannot resume with a different architecture ({'; '.join(changes)})", path=str(path))
        check_dims(archive["dims"], self.dims)
        self.model.load_state_dict(archive["model_state"])
        if archive["optimizer_state"] is not None:
            self.optimizer.load_state_dict(archive["optimizer_state"])
        meta: CheckpointMeta = archive["meta"]
        self.epoch = meta.epoch
        self.global_step = meta.global_step
        self.best_val = meta.best_val_rmse
        self.epochs_without_improvement = meta.epochs_without_improvement
        self.best_epoch = meta.epoch - meta.epochs_without_improvement
        logger.info("🔁 resumed from %s at epoch %d (best val RMSE %s)", path, self.epoch, self.best_val)

    # ------------------------- Loop -------------------------

    def _write_metrics(self, rows: List[Dict]) -> None:
        new_file = not self.metrics_path.exists()
        with self.metrics_path.open("a", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=METRICS_COLUMNS)
            if new_file:
                writer.writeheader()
            writer.writerows(rows)

    def _diagnose(self, batch: Dict[str, torch.Tensor], breakdown: Optional[LossBreakdown]) -> Dict:
        norms = {name: float(p.detach().norm()) for name, p in self.model.named_parameters()}
        diagnostics = {
            "epoch": self.epoch + 1,
            "global_step": self.global_step,
            "last_batch": batch["indices"].tolist(),
            "loss": breakdown.model_dump() if breakdown is not None else None,
            "parameter_norms": norms,
        }
        dump = self.output_dir / "nan_dump.json"
        dump.write_text(json.dumps(diagnostics, indent=2, default=str), encoding="utf-8")
        diagnostics["dump_path"] = str(dump)
        return diagnostics

    def train_step(self, batch: Dict[str, torch.Tensor]) -> LossBreakdown:
        self.model.train()
        self.optimizer.zero_grad()
        output = self.model(batch["inputs"], batch["met"], batch["cal"], check=self.config.check_structures)
        total, breakdown = joint_loss(
            batch["targets"],
            output.prediction,
            output.states,
            self.model,
            lambda1=self.config.lambda1,
            lambda2=self.config.lambda2,
            temperature=self.config.temperature,
            use_contrastive=self.config.use_contrastive,
        )
        if not torch.isfinite(total):
            diagnostics = self._diagnose(batch, breakdown)
            raise NumericalError(
                f"non-finite loss at step {self.global_step + 1} (batch {diagnostics['last_batch']}); "
                f"diagnostics in {diagnostics['dump_path']}",
                diagnostics,
            )
        total.backward()
        if self.config.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.config.grad_clip)
        self.optimizer.step()
        self.global_step += 1
        return breakdown

    def validate(self) -> float:
        split = "val" if "val" in self.data.splits else "train"
        arrays = self.data.split(split)
        predictions = predict_arrays(self.model, arrays, self.config.batch_size)
        return rmse(arrays.raw_targets, to_raw_scale(predictions, self.data.scale))

    def train(self, resume: Optional[PathLike] = None, max_epochs: Optional[int] = None) -> TrainResult:
        if resume is not None:
            self.resume(resume)
        elif self.metrics_path.exists():
            self.metrics_path.unlink()
        if "val" not in self.data.splits:
            logger.warning("no validation windows: early stopping monitors the training split")

        max_epochs = max_epochs or self.config.max_epochs
        train_arrays = self.data.split("train")
        stopped_early = False
        logger.info("🚀 training: %d windows, batch %d, up to %d epochs", len(train_arrays), self.config.batch_size, max_epochs)

        while self.epoch < max_epochs:
            epoch = self.epoch + 1
            order = batch_order(len(train_arrays), self.config.batch_size, self.config.seed, epoch)
            batches = (make_batch(train_arrays, indices) for indices in order)
            rows = []
            for batch in prefetched(batches, self.config.prefetch):
                breakdown = self.train_step(batch)
                row = {"step": self.global_step, "epoch": epoch, **breakdown.model_dump(include={"mse", "contrastive", "l2", "total"}), "val_rmse": ""}
                rows.append(row)
                if self.global_step % self.config.log_every == 0:
                    logger.debug("step %d: %s", self.global_step, breakdown.model_dump_json())

            self.epoch = epoch
            val_rmse = self.validate()
            rows[-1]["val_rmse"] = val_rmse
            self._write_metrics(rows)

            improved = self.best_val is None or val_rmse < self.best_val
            if improved:
                self.best_val = val_rmse
                self.best_epoch = epoch
                self.epochs_without_improvement = 0
                self.save(BEST_NAME)
            else:
                self.epochs_without_improvement += 1
            self.save(LAST_NAME)
            logger.info(
                "epoch %d: loss %.5f, val RMSE %.5f%s",
                epoch,
                float(np.mean([r["total"] for r in rows])),
                val_rmse,
                " ✅ best" if improved else "",
            )
            if self.epochs_without_improvement >= self.config.patience:
                logger.info("⏹️ early stop at epoch %d (best %d)", epoch, self.best_epoch)
                stopped_early = True
                break

        return TrainResult(
            epochs_run=self.epoch,
            best_epoch=self.best_epoch,
            best_val_rmse=self.best_val,
            stopped_early=stopped_early,
            best_path=self.output_dir / BEST_NAME,
            last_path=self.output_dir / LAST_NAME,
            global_step=self.global_step,
        )


# ------------------------- Inference -------------------------

@torch.no_grad()
def predict_arrays(model: RiskHypergraphNet, arrays: SplitArrays, batch_size: int = 8) -> np.ndarray:
    """Transformed-scale predictions (W, N, tau), in window order."""
    model.eval()
    outputs = []
    for indices in batch_order(len(arrays), batch_size, seed=0, epoch=0, shuffle=False):
        batch = make_batch(arrays, indices)
        outputs.append(model(batch["inputs"], batch["met"], batch["cal"]).prediction.numpy())
    return np.concatenate(outputs, axis=0)


def load_model(config: ExperimentConfig, data: ExperimentData, checkpoint: PathLike) -> RiskHypergraphNet:
    """Rebuild the network for ``data`` and load checkpoint weights; dims must agree."""
    archive = load_checkpoint(checkpoint)
    changes = architecture_changes(archive["config"], config)
    if changes:
        raise DataError(f"checkpoint was trained with a different architecture ({'; '.join(changes)})", path=str(checkpoint))
    model = build_model(config, data)
    check_dims(archive["dims"], model.dims)
    model.load_state_dict(archive["model_state"])
    model.eval()
    return model


def evaluate_model(model: RiskHypergraphNet, data: ExperimentData, split: str = "test", batch_size: int = 8) -> EvalReport:
    arrays = data.split(split)
    predictions = to_raw_scale(predict_arrays(model, arrays, batch_size), data.scale)
    return build_report(
        arrays.raw_targets,
        predictions,
        model.config.k_fraction,
        split=split,
        source="model",
        groups=region_groups(data.train_totals),
    )


def evaluate_persistence(data: ExperimentData, config: ExperimentConfig, split: str = "test") -> EvalReport:
    """Last-input-step forecast on the raw scale."""
    arrays = data.split(split)
    last_raw = data.dataset.risk.values[:, arrays.starts + config.input_steps - 1].T  # (W, N)
    predictions = persistence_baseline(last_raw[..., None], config.horizon)
    return build_report(
        arrays.raw_targets,
        predictions,
        config.k_fraction,
        split=split,
        source="persistence",
        groups=region_groups(data.train_totals),
    )
