import json

import numpy as np
import pytest
import torch

from apps.cli.main import _config as _resolve_config
from apps.cli.main import build_parser, main
from apps.worker.prefetch import BatchPrefetcher, prefetched
from core.config import config_from_dict, save_config
from core.errors import DataError, DimensionMismatchError, NumericalError
from harness.checkpoint import BEST_NAME, LAST_NAME, check_dims, load_checkpoint
from harness.data import batch_order, iterate_batches, prepare_experiment
from harness.export import export_artifacts, hyperedge_members
from harness.trainer import Trainer, build_model, evaluate_model, evaluate_persistence, load_model, model_dims


def _variant(config, **changes):
    return config_from_dict({**config.model_dump(), **changes})


class TestExperimentData:
    """Training-period transforms and split arrays"""

    def test_split_shapes(self, experiment, small_config):
        """Split arrays have the configured window shapes"""
        train = experiment.split("train")
        assert train.inputs.shape[1:] == (9, small_config.input_steps)
        assert train.targets.shape[1:] == (9, small_config.horizon)
        assert train.met.shape[1:] == (9, small_config.input_steps, 3)
        assert train.cal.shape[1:] == (9, small_config.input_steps, 9)
        assert {"train", "val", "test"} <= set(experiment.splits)

    def test_pkde_fitted_on_training_period(self, experiment, small_dataset):
        """Transform parameters use only the training period"""
        train_end = experiment.boundaries[0]
        totals = small_dataset.risk.values[:, :train_end].sum(axis=1)
        np.testing.assert_allclose(experiment.train_totals, totals)
        assert experiment.scale == small_dataset.risk.values[:, :train_end].max()

    def test_transformed_inputs_have_no_zeros(self, experiment):
        """Transformed inputs contain no zero cells"""
        assert np.all(experiment.split("train").inputs != 0)

    def test_raw_targets_are_untransformed(self, experiment, small_dataset, small_config):
        """Raw targets match the raw risk tensor"""
        test = experiment.split("test")
        first = test.starts[0] + small_config.input_steps
        np.testing.assert_array_equal(test.raw_targets[0, :, 0], small_dataset.risk.values[:, first])

    def test_without_pkde_zeros_stay(self, small_dataset, small_config):
        """With the transform off, zeros stay and values are max scaled"""
        data = prepare_experiment(small_dataset, _variant(small_config, use_pkde=False))
        inputs = data.split("train").inputs
        assert inputs.min() == 0.0
        assert inputs.max() <= 1.0

    def test_meteorology_standardized_on_training_period(self, experiment):
        """Weather statistics come from the training period"""
        train_end = experiment.boundaries[0]
        mean = np.asarray(experiment.met_stats["mean"])
        np.testing.assert_allclose(mean, experiment.dataset.met[:train_end].mean(axis=0))

    def test_too_few_training_steps(self, small_dataset, small_config):
        """No training window is a data error"""
        with pytest.raises(DataError, match="no training windows"):
            prepare_experiment(small_dataset, _variant(small_config, input_steps=30, horizon=20))

    def test_missing_split(self, experiment):
        """Unknown split names are refused"""
        with pytest.raises(DataError):
            experiment.split("holdout")


class TestBatching:
    """Seeded batch order and the background prefetcher"""

    def test_order_depends_on_seed_and_epoch(self):
        """Batch order is a permutation fixed by seed and epoch"""
        first = np.concatenate(batch_order(10, 4, seed=1, epoch=1))
        again = np.concatenate(batch_order(10, 4, seed=1, epoch=1))
        other = np.concatenate(batch_order(10, 4, seed=1, epoch=2))
        np.testing.assert_array_equal(first, again)
        assert sorted(first.tolist()) == list(range(10))
        assert first.tolist() != other.tolist()

    def test_unshuffled_batches(self, experiment):
        """Evaluation batches keep window order"""
        batches = list(iterate_batches(experiment.split("val"), 4))
        assert [b["indices"].tolist() for b in batches] == [[0, 1, 2, 3], [4, 5]]

    def test_prefetch_keeps_order(self):
        """Prefetching does not reorder batches"""
        assert list(BatchPrefetcher(iter(range(50)), depth=3)) == list(range(50))

    def test_prefetch_raises_producer_errors(self):
        """Producer errors reach the consumer"""
        def source():
            yield 1
            raise RuntimeError("broken batch")

        with pytest.raises(RuntimeError, match="broken batch"):
            list(prefetched(source(), 2))

    def test_prefetch_disabled(self):
        """Depth 0 returns the source untouched"""
        items = [1, 2, 3]
        assert prefetched(items, 0) is items

    def test_prefetch_depth(self):
        """A prefetcher needs a positive depth"""
        with pytest.raises(ValueError):
            BatchPrefetcher([], depth=0)


class TestTrainer:
    """Training loop, checkpoints and evaluation"""

    def test_one_epoch(self, experiment, small_config):
        """One epoch writes checkpoints and one metrics row per step"""
        result = Trainer(small_config, experiment).train(max_epochs=1)
        assert result.epochs_run == 1
        assert result.best_path.exists() and result.last_path.exists()
        rows = (result.best_path.parent / "metrics.csv").read_text().strip().splitlines()
        assert rows[0] == "step,epoch,mse,contrastive,l2,total,val_rmse"
        assert len(rows) - 1 == result.global_step
        assert rows[-1].split(",")[-1] != ""

    def test_deterministic(self, experiment, small_config, tmp_path):
        """Two runs with one seed give identical weights"""
        first = Trainer(small_config, experiment, tmp_path / "a")
        second = Trainer(small_config, experiment, tmp_path / "b")
        first.train(max_epochs=1)
        second.train(max_epochs=1)
        for name, tensor in first.model.state_dict().items():
            assert torch.equal(tensor, second.model.state_dict()[name]), name

    @pytest.mark.slow
    def test_resume_matches_uninterrupted_run(self, experiment, small_config, tmp_path):
        """Resuming from last.pt matches an uninterrupted run"""
        straight = Trainer(small_config, experiment, tmp_path / "straight")
        straight.train(max_epochs=2)

        interrupted = Trainer(small_config, experiment, tmp_path / "resumed")
        interrupted.train(max_epochs=1)
        resumed = Trainer(small_config, experiment, tmp_path / "resumed")
        result = resumed.train(resume=tmp_path / "resumed" / LAST_NAME, max_epochs=2)

        assert result.epochs_run == 2
        assert result.global_step == straight.global_step
        for name, tensor in straight.model.state_dict().items():
            assert torch.equal(tensor, resumed.model.state_dict()[name]), name

    def test_early_stopping(self, experiment, small_config, monkeypatch):
        """Training stops after patience epochs without improvement"""
        trainer = Trainer(_variant(small_config, patience=2, max_epochs=10), experiment)
        scores = iter([3.0, 2.0, 2.5, 2.0, 4.0])
        monkeypatch.setattr(trainer, "validate", lambda: next(scores))
        result = trainer.train()
        assert result.stopped_early
        assert result.epochs_run == 4
        assert result.best_epoch == 2
        assert result.best_val_rmse == 2.0
        assert load_checkpoint(result.best_path)["meta"].epoch == 2

    def test_non_finite_loss(self, experiment, small_config):
        """A NaN loss raises, exits with code 3 and writes a dump"""
        trainer = Trainer(_variant(small_config, check_structures=False), experiment)
        with torch.no_grad():
            trainer.model.head.fc2.bias.fill_(float("nan"))
        batch = next(iterate_batches(experiment.split("train"), 4))
        with pytest.raises(NumericalError, match="non-finite loss") as info:
            trainer.train_step(batch)
        dump = json.loads((trainer.output_dir / "nan_dump.json").read_text())
        assert dump["last_batch"] == [0, 1, 2, 3]
        assert info.value.exit_code == 3

    def test_checkpoint_round_trip(self, experiment, small_config):
        """A reloaded checkpoint evaluates identically"""
        result = Trainer(small_config, experiment).train(max_epochs=1)
        archive = load_checkpoint(result.best_path)
        assert archive["meta"].epoch == 1
        assert archive["pkde"]["scale"] == experiment.scale
        model = load_model(small_config, experiment, result.best_path)
        before = evaluate_model(model, experiment, "test")
        again = evaluate_model(load_model(small_config, experiment, result.best_path), experiment, "test")
        assert before.rmse == again.rmse
        assert before.source == "model"

    def test_checkpoint_dims_must_match(self, experiment, small_dataset, small_config):
        """A horizon change is caught on load"""
        result = Trainer(small_config, experiment).train(max_epochs=1)
        other = _variant(small_config, horizon=3)
        with pytest.raises(DimensionMismatchError, match="horizon"):
            load_model(other, prepare_experiment(small_dataset, other), result.best_path)

    def test_checkpoint_architecture_must_match(self, experiment, small_config):
        """An architecture change is caught on load"""
        result = Trainer(small_config, experiment).train(max_epochs=1)
        with pytest.raises(DataError, match="use_hypergraph"):
            load_model(_variant(small_config, use_hypergraph=False), experiment, result.best_path)

    def test_check_dims_labels(self, experiment, small_config):
        """Dimension errors name the axis"""
        dims = model_dims(experiment, small_config)
        with pytest.raises(DimensionMismatchError, match="region"):
            check_dims(dims, dims.model_copy(update={"n_regions": 10}))

    def test_unreadable_checkpoint(self, tmp_path):
        """A corrupt checkpoint is a data error"""
        path = tmp_path / "broken.pt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(DataError, match="unreadable"):
            load_checkpoint(path)

    def test_persistence_report(self, experiment, small_config):
        """Persistence report covers every test window"""
        report = evaluate_persistence(experiment, small_config, "test")
        assert report.source == "persistence"
        assert report.n_windows == len(experiment.split("test"))
        assert len(report.group_metrics) == 3

    def test_static_history_set(self, experiment, small_config):
        """The model receives the training-period mean history"""
        model = build_model(small_config, experiment)
        np.testing.assert_allclose(model.learner.static_history.numpy(), experiment.mean_history, rtol=1e-6)


class TestExport:
    """Learned structures and prediction artifacts"""

    def test_artifacts(self, experiment, small_config, tmp_path):
        """Every export file is written for every view"""
        model = build_model(small_config, experiment)
        written = {path.name for path in export_artifacts(model, experiment, small_config, tmp_path / "export", plots=True)}
        for view in ("S", "T", "P", "R"):
            assert f"graph_{view}.csv" in written
            assert f"hypergraph_{view}.csv" in written
            assert f"hyperedge_members_{view}.csv" in written
        assert {"hyperedge_summary.csv", "predictions_test.csv", "metrics_model_test.json", "region_error.csv"} <= written
        assert "step_metrics_test.png" in written

    def test_hyperedge_members_ranked(self):
        """Members are ranked by weight and zeros dropped"""
        H = np.array([[0.2, 0.0], [0.9, 0.0], [0.5, 0.3]])
        frame = hyperedge_members(H, ["a", "b", "c"], top=2)
        assert frame[frame.hyperedge == 0]["region_id"].tolist() == ["b", "c"]
        assert frame[frame.hyperedge == 1]["region_id"].tolist() == ["c"]


class TestCli:
    """Exit codes and end-to-end commands"""

    @pytest.fixture(autouse=True)
    def _settings(self, small_settings):
        self.settings = small_settings

    def _config(self, tmp_path, **extra):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({**self.settings, "output_dir": str(tmp_path / "run"), **extra}))
        return path

    def test_help(self):
        """--help exits 0"""
        assert main(["--help"]) == 0

    def test_unknown_command(self):
        """Unknown commands exit 1"""
        assert main(["forecast"]) == 1

    def test_missing_config(self, tmp_path):
        """A missing config exits 1"""
        assert main(["ingest", "--config", str(tmp_path / "absent.json"), "--dataset", str(tmp_path)]) == 1

    def test_missing_dataset(self, tmp_path):
        """A missing dataset exits 2"""
        assert main(["ingest", "--config", str(self._config(tmp_path)), "--dataset", str(tmp_path / "nowhere")]) == 2

    def test_bad_data_line(self, tmp_path, dataset_dir):
        """A bad data line exits 2"""
        (dataset_dir / "regions.csv").write_text("region_id\nr000\nr000\n")
        assert main(["ingest", "--config", str(self._config(tmp_path)), "--dataset", str(dataset_dir)]) == 2

    @pytest.mark.integration
    def test_pipeline(self, tmp_path):
        """make-synthetic, ingest, train, evaluate, predict and export end to end"""
        data_dir = tmp_path / "city"
        assert main(["make-synthetic", "--out", str(data_dir), "--regions", "9", "--steps", "60", "--hotspots", "3", "--seed", "7"]) == 0
        config = self._config(tmp_path, dataset_path=str(data_dir))

        assert main(["ingest", "--config", str(config)]) == 0
        assert (tmp_path / "run" / "dataset.npz").exists()
        summary = json.loads((tmp_path / "run" / "ingest_summary.json").read_text())
        assert summary["sparsity"]["n_regions"] == 9

        assert main(["evaluate", "--config", str(config), "--baseline", "persistence"]) == 0
        assert (tmp_path / "run" / "eval_persistence_test.json").exists()

        assert main(["train", "--config", str(config), "--max-epochs", "1"]) == 0
        best = tmp_path / "run" / BEST_NAME
        assert best.exists()
        assert main(["evaluate", "--config", str(config), "--checkpoint", str(best)]) == 0
        assert main(["evaluate", "--checkpoint", str(best), "--split", "val"]) == 0
        assert (tmp_path / "run" / "eval_model_val.json").exists()
        assert main(["predict", "--config", str(config), "--checkpoint", str(best)]) == 0
        assert (tmp_path / "run" / "predictions.csv").exists()
        assert main(["export", "--config", str(config), "--checkpoint", str(best)]) == 0
        assert (tmp_path / "run" / "export" / "hyperedge_summary.csv").exists()

    def test_evaluate_needs_a_source(self, tmp_path, dataset_dir):
        """evaluate without checkpoint or baseline exits 1"""
        config = self._config(tmp_path, dataset_path=str(dataset_dir))
        assert main(["evaluate", "--config", str(config)]) == 1

    def test_evaluate_without_dataset(self, tmp_path, small_config):
        """evaluate without a dataset exits 2"""
        path = save_config(small_config, tmp_path / "snapshot.json")
        assert main(["evaluate", "--config", str(path), "--baseline", "persistence"]) == 2

    def test_checkpoint_snapshot_takes_seed_override(self, experiment, small_config):
        """--seed still applies when the config comes from the checkpoint"""
        result = Trainer(small_config, experiment).train(max_epochs=1)
        args = build_parser().parse_args(["evaluate", "--checkpoint", str(result.best_path), "--seed", "11"])
        config = _resolve_config(args)
        assert config.seed == 11
        assert config.model_dump(exclude={"seed"}) == small_config.model_dump(exclude={"seed"})

        args = build_parser().parse_args(["evaluate", "--checkpoint", str(result.best_path)])
        assert _resolve_config(args).seed == small_config.seed
