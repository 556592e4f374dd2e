import json
import math

import numpy as np
import pytest

from core.schemas import AccidentEvent
from evaluation.baseline import persistence_baseline
from evaluation.metrics import (
    build_report,
    grouped_errors,
    mae,
    recall_at_k,
    region_errors,
    region_groups,
    rmse,
    step_mse,
    top_k_indices,
)
from evaluation.oracles import mae_loop, recall_loop, risk_accumulate, rmse_loop
from evaluation.report import format_table, plot_step_metrics, report_frame, write_report
from risk.scores import compute_risk_scores
from risk.windows import SampleWindow


class TestErrorMetrics:
    """RMSE / MAE on the raw scale"""

    def test_known_values(self):
        """Hand-computed MSE, RMSE and MAE"""
        Y = np.array([[[0.0], [1.0]]])
        Y_hat = np.zeros((1, 2, 1))
        assert step_mse(Y, Y_hat).tolist() == [0.5]
        assert rmse(Y, Y_hat) == pytest.approx(math.sqrt(0.5))
        assert mae(Y, Y_hat) == pytest.approx(0.5)

    def test_two_dimensional_input_is_one_window(self):
        """A 2-D array is read as a single window"""
        Y = np.array([[1.0, 2.0], [0.0, 0.0]])
        assert rmse(Y, np.zeros_like(Y)) == rmse(Y[None], np.zeros((1, 2, 2)))

    def test_match_loop_references(self):
        """Vectorized errors agree with the loop references"""
        rng = np.random.default_rng(0)
        Y = rng.poisson(0.5, size=(4, 6, 3)).astype(float)
        Y_hat = rng.random((4, 6, 3))
        assert rmse(Y, Y_hat) == pytest.approx(rmse_loop(Y, Y_hat))
        assert mae(Y, Y_hat) == pytest.approx(mae_loop(Y, Y_hat))

    def test_shape_mismatch(self):
        """Arrays of different shape are refused"""
        with pytest.raises(ValueError, match="shape mismatch"):
            rmse(np.zeros((1, 2, 3)), np.zeros((1, 3, 2)))

    def test_risk_accumulation_matches_loop(self):
        """Risk accumulation agrees with the loop reference"""
        rng = np.random.default_rng(4)
        events = [
            AccidentEvent(region_index=int(r), time_index=int(t), severity=int(s))
            for r, t, s in zip(rng.integers(0, 5, 50), rng.integers(0, 8, 50), rng.integers(1, 4, 50))
        ]
        np.testing.assert_array_equal(compute_risk_scores(events, 5, 8).values, risk_accumulate(events, 5, 8))


class TestRecall:
    """Recall@K over positive-risk regions"""

    def test_known_value(self):
        """One hit out of two positive regions"""
        Y = np.array([3.0, 1.0, 0.0, 2.0])[:, None]
        Y_hat = np.array([0.9, 0.8, 0.1, 0.0])[:, None]
        result = recall_at_k(Y, Y_hat, k_fraction=0.5)
        assert result.value == pytest.approx(0.5)
        assert result.n_retained == 1

    def test_fewer_positives_than_k(self):
        """R holds only positive regions when they are fewer than K"""
        Y = np.array([0.0, 0.0, 5.0, 0.0])[:, None]
        Y_hat = np.array([0.0, 0.0, 1.0, 0.5])[:, None]
        assert recall_at_k(Y, Y_hat, k_fraction=0.5).value == 1.0

    def test_steps_without_accidents_are_skipped(self):
        """Accident-free steps are skipped and counted"""
        Y = np.zeros((2, 4, 2))
        Y[0, 1, 0] = 1.0
        result = recall_at_k(Y, np.random.default_rng(0).random((2, 4, 2)), 0.25)
        assert result.n_retained == 1
        assert result.n_skipped == 3

    def test_undefined_when_nothing_retained(self):
        """No positive step leaves recall undefined"""
        result = recall_at_k(np.zeros((1, 4, 2)), np.ones((1, 4, 2)))
        assert result.value is None
        assert not result.defined

    def test_matches_exhaustive_reference(self):
        """Agrees with the exhaustive top-k reference"""
        rng = np.random.default_rng(1)
        Y = rng.poisson(0.8, size=(3, 7, 2)).astype(float)
        Y_hat = rng.integers(0, 3, size=(3, 7, 2)).astype(float)
        assert recall_at_k(Y, Y_hat, 0.3).value == pytest.approx(recall_loop(Y, Y_hat, 0.3))

    def test_invariant_under_monotone_rescaling(self):
        """Recall depends only on the prediction order"""
        rng = np.random.default_rng(2)
        Y = rng.poisson(1.0, size=(5, 10, 3)).astype(float)
        Y_hat = rng.random((5, 10, 3))
        plain = recall_at_k(Y, Y_hat, 0.2).value
        assert recall_at_k(Y, np.exp(3 * Y_hat) - 7, 0.2).value == pytest.approx(plain)

    def test_ties_go_to_lower_index(self):
        """Tied scores rank the lower index first"""
        assert top_k_indices(np.array([1.0, 2.0, 2.0, 2.0]), 2).tolist() == [1, 2]

    def test_k_fraction_range(self):
        """k_fraction must lie in (0, 1]"""
        with pytest.raises(ValueError):
            recall_at_k(np.ones((1, 3, 1)), np.ones((1, 3, 1)), k_fraction=0.0)


class TestBaselineAndGroups:
    """Persistence baseline and per-group errors"""

    def test_persistence_from_window(self):
        """Persistence repeats the last observed value"""
        window = SampleWindow(
            inputs=np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 4.0]]),
            targets=np.zeros((2, 2)),
            external_met=np.zeros((2, 3, 0)),
            external_cal=np.zeros((2, 3, 0)),
            window_start=0,
        )
        np.testing.assert_array_equal(persistence_baseline(window), [[3.0, 3.0], [4.0, 4.0]])

    def test_persistence_stacked(self):
        """Persistence over stacked windows"""
        inputs = np.arange(12, dtype=float).reshape(2, 2, 3)
        out = persistence_baseline(inputs, horizon=4)
        assert out.shape == (2, 2, 4)
        assert np.all(out[1, 1] == 11.0)

    def test_persistence_needs_horizon(self):
        """Stacked inputs need an explicit horizon"""
        with pytest.raises(ValueError):
            persistence_baseline(np.zeros((1, 2, 3)))

    def test_region_groups(self):
        """Median split of training totals into three groups"""
        groups = region_groups(np.array([0.0, 1.0, 5.0, 9.0]))
        assert groups["non-risk"].tolist() == [0]
        assert groups["low-risk"].tolist() == [1]
        assert groups["high-risk"].tolist() == [2, 3]

    def test_grouped_errors_with_empty_group(self):
        """An empty group reports no error instead of failing"""
        Y = np.ones((1, 3, 1))
        groups = region_groups(np.array([1.0, 2.0, 3.0]))
        metrics = {m.group: m for m in grouped_errors(Y, np.zeros_like(Y), groups)}
        assert metrics["non-risk"].n_regions == 0
        assert metrics["non-risk"].rmse is None
        assert metrics["high-risk"].rmse == pytest.approx(1.0)

    def test_region_errors(self):
        """Per-region errors keep the region ids"""
        Y = np.array([[[2.0, 2.0], [0.0, 0.0]]])
        frame = region_errors(Y, np.zeros_like(Y), ["a", "b"])
        assert frame["region_id"].tolist() == ["a", "b"]
        assert frame["rmse"].tolist() == [2.0, 0.0]


class TestReport:
    """EvalReport assembly and files"""

    def setup_method(self):
        rng = np.random.default_rng(3)
        self.Y = rng.poisson(0.7, size=(4, 5, 2)).astype(float)
        self.Y_hat = rng.random((4, 5, 2))

    def test_aggregates(self):
        """Report aggregates follow the per-step metrics"""
        report = build_report(self.Y, self.Y_hat, k_fraction=0.4, groups=region_groups(self.Y.sum(axis=(0, 2))))
        assert [s.step for s in report.per_step] == [1, 2]
        assert report.rmse == pytest.approx(math.sqrt(np.mean([s.rmse ** 2 for s in report.per_step])))
        recalls = [s.recall_at_k for s in report.per_step if s.recall_at_k is not None]
        assert report.recall_at_k == pytest.approx(np.mean(recalls))
        assert len(report.group_metrics) == 3

    def test_report_recall_averages_steps_not_pairs(self):
        """Report recall is the mean of per-step values; recall_at_k pools pairs"""
        Y = np.zeros((2, 2, 2))
        Y_hat = np.zeros((2, 2, 2))
        Y[0, 0, 0], Y_hat[0, 0, 0] = 1.0, 1.0  # hit
        Y[1, 0, 0], Y_hat[1, 1, 0] = 1.0, 1.0  # miss
        Y[0, 0, 1], Y_hat[0, 0, 1] = 2.0, 1.0  # hit; window 1 step 2 has no accident
        assert recall_at_k(Y, Y_hat, 0.5).value == pytest.approx(2 / 3)
        assert build_report(Y, Y_hat, k_fraction=0.5).recall_at_k == pytest.approx(0.75)

    def test_undefined_recall_in_table(self):
        """The text table shows an undefined recall"""
        report = build_report(np.zeros((1, 3, 1)), np.ones((1, 3, 1)))
        assert report.recall_at_k is None
        assert "undefined" in format_table(report)

    def test_files(self, tmp_path):
        """Report JSON is named by source and split"""
        report = build_report(self.Y, self.Y_hat, split="val", source="persistence")
        path = write_report(report, tmp_path)
        assert path.name == "eval_persistence_val.json"
        assert json.loads(path.read_text())["split"] == "val"
        frame = report_frame(report)
        assert frame["step"].tolist() == [1, 2, "all"]
        assert path.with_suffix(".csv").exists()

    def test_plot(self, tmp_path):
        """Per-step plot is written"""
        report = build_report(self.Y, self.Y_hat)
        path = plot_step_metrics(report, tmp_path / "steps.png")
        assert path.exists() and path.stat().st_size > 0
