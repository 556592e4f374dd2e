"""
EvalReport serialisation: JSON, CSV, a plain-text table and an optional plot.
"""

import logging
from pathlib import Path
from typing import Union

import pandas as pd

from core.schemas import EvalReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def report_frame(report: EvalReport) -> pd.DataFrame:
    rows = [
        {"step": s.step, "rmse": s.rmse, "mae": s.mae, "recall_at_k": s.recall_at_k, "n_retained": s.n_retained}
        for s in report.per_step
    ]
    rows.append(
        {
            "step": "all",
            "rmse": report.rmse,
            "mae": report.mae,
            "recall_at_k": report.recall_at_k,
            "n_retained": sum(s.n_retained for s in report.per_step),
        }
    )
    return pd.DataFrame(rows, columns=["step", "rmse", "mae", "recall_at_k", "n_retained"])


def format_table(report: EvalReport) -> str:
    def fmt(value):
        return "undefined" if value is None else f"{value:.4f}"

    lines = [
        f"{report.source} on {report.split} ({report.n_windows} windows, K={report.k_fraction:.0%})",
        f"{'step':>6} {'RMSE':>10} {'MAE':>10} {'Recall@K':>10}",
    ]
    for s in report.per_step:
        lines.append(f"{s.step:>6} {fmt(s.rmse):>10} {fmt(s.mae):>10} {fmt(s.recall_at_k):>10}")
    lines.append(f"{'all':>6} {fmt(report.rmse):>10} {fmt(report.mae):>10} {fmt(report.recall_at_k):>10}")
    for g in report.group_metrics:
        lines.append(f"  {g.group:<10} regions={g.n_regions:<5} RMSE={fmt(g.rmse)} MAE={fmt(g.mae)}")
    return "\n".join(lines)


def write_report(report: EvalReport, out_dir: PathLike, stem: str = "eval") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{stem}_{report.source}_{report.split}.json"
    json_path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    report_frame(report).to_csv(json_path.with_suffix(".csv"), index=False)
    logger.info("📊 report written to %s", json_path)
    return json_path


def plot_step_metrics(report: EvalReport, path: PathLike) -> Path:
    """Line chart of per-step RMSE / MAE / Recall@K."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frame = report_frame(report).iloc[:-1]
    steps = frame["step"].astype(int)
    fig, (ax_err, ax_rec) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_err.plot(steps, frame["rmse"], marker="o", label="RMSE")
    ax_err.plot(steps, frame["mae"], marker="s", label="MAE")
    ax_err.set_xlabel("horizon step")
    ax_err.legend()
    ax_rec.plot(steps, frame["recall_at_k"].astype(float), marker="o", color="tab:green")
    ax_rec.set_xlabel("horizon step")
    ax_rec.set_ylabel(f"Recall@{report.k_fraction:.0%}")
    ax_rec.set_ylim(0, 1)
    fig.tight_layout()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
