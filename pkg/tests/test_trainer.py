"""Optimizers, the training loop, experiment drivers and their report files."""

import dataclasses

import numpy as np
import pytest

from modeseg.autodiff import Tensor
from modeseg.config import GridConfig, NormConfig, OptimizerConfig
from modeseg.core import trainer as trainer_module
from modeseg.core.checkpoint import weights_fingerprint
from modeseg.core.exceptions import DataError, NumericalError, TrainingError
from modeseg.core.experiments import (
    compare_normalizations,
    cross_validate,
    enumerate_grid,
    grid_search,
    select_best,
    speedup_report,
)
from modeseg.core.models import METRIC_COLUMNS, GridEntry, RunFailure, RunRecord
from modeseg.core.normalization import ModeNorm2d
from modeseg.core.optimizers import SGD, Adam, make_optimizer
from modeseg.core.reporting import (
    CV_COLUMNS,
    GRID_COLUMNS,
    SPEEDUP_COLUMNS,
    read_csv,
    write_cv_results,
    write_grid_results,
    write_record,
    write_speedup,
)
from modeseg.core.segnets import build_model
from modeseg.core.tiling import TileDataset
from modeseg.core.trainer import EarlyStopping, evaluate, iterate_batches, predict_tiles, train


def _quadratic_param(value=1.0):
    return Tensor(np.array([value]), requires_grad=True, dtype=np.float64)


def _descend(optimizer, param, steps):
    """Minimize p**2 / 2, whose gradient is p; returns the trajectory."""
    path = [float(param.data[0])]
    for _ in range(steps):
        param.grad = param.data.copy()
        optimizer.step()
        path.append(float(param.data[0]))
    return np.array(path)


@pytest.mark.unit
class TestOptimizers:
    def test_sgd_decays_geometrically(self):
        p = _quadratic_param()
        path = _descend(SGD([("p", p)], OptimizerConfig(kind="sgd", learning_rate=0.1)), p, 10)
        np.testing.assert_allclose(path, 0.9 ** np.arange(11))

    def test_sgd_momentum_accumulates_velocity(self):
        p = _quadratic_param()
        path = _descend(SGD([("p", p)], OptimizerConfig(kind="sgd", learning_rate=0.1, momentum=0.9)), p, 2)
        np.testing.assert_allclose(path, [1.0, 0.9, 0.72])

    def test_adam_first_step_has_learning_rate_length(self):
        p = _quadratic_param()
        path = _descend(Adam([("p", p)], OptimizerConfig(kind="adam", learning_rate=0.1)), p, 1)
        assert path[1] == pytest.approx(0.9, abs=1e-6)

    def test_adam_without_momentum_decreases_monotonically(self):
        p = _quadratic_param()
        cfg = OptimizerConfig(kind="adam", learning_rate=0.01, beta1=0.0)
        path = _descend(Adam([("p", p)], cfg), p, 50)
        assert np.all(np.diff(path) < 0)
        assert np.all(path > 0)

    def test_parameters_without_gradient_stay_put(self):
        p, q = _quadratic_param(), _quadratic_param(2.0)
        optimizer = Adam([("p", p), ("q", q)])
        p.grad = np.ones(1)
        optimizer.step()
        assert q.data[0] == 2.0 and p.data[0] < 1.0

    def test_non_finite_gradient(self):
        p = _quadratic_param()
        p.grad = np.array([np.nan])
        with pytest.raises(NumericalError):
            Adam([("p", p)]).step()

    def test_make_optimizer_covers_every_parameter(self, smoke_config):
        model = build_model(smoke_config.model)
        optimizer = make_optimizer(model, OptimizerConfig(kind="sgd", learning_rate=0.01))
        assert isinstance(optimizer, SGD)
        assert len(optimizer.params) == len(list(model.named_parameters()))

    @pytest.mark.parametrize(
        "cfg", [OptimizerConfig(kind="adam"), OptimizerConfig(kind="sgd", learning_rate=0.01, momentum=0.9)]
    )
    def test_moments_follow_mode_reorder(self, rng, float64, cfg):
        layer = ModeNorm2d(1, NormConfig(kind="mode", modes=2))
        optimizer = make_optimizer(layer, cfg)
        noise = rng.standard_normal((4, 1, 8, 8))
        data = np.where(rng.random(noise.shape) < 0.4, 10.0 + noise, -10.0 + noise)
        (layer(Tensor(data)) * Tensor(rng.standard_normal(data.shape))).sum().backward()
        optimizer.step()
        first = {name: m.copy() for name, m in optimizer.state.first_moment.items()}
        second = {name: v.copy() for name, v in optimizer.state.second_moment.items()}
        assert set(first) == {"gamma", "beta"}
        assert not np.allclose(first["gamma"], first["gamma"][::-1])

        # swapped means make the next EM pass re-sort the two modes
        layer.state.mu = layer.state.mu[::-1].copy()
        gamma = layer.gamma.data.copy()
        optimizer.zero_grad()
        layer(Tensor(data))
        np.testing.assert_array_equal(layer.state.pending_order, [[1], [0]])
        np.testing.assert_array_equal(layer.gamma.data, gamma[::-1])

        optimizer.step()
        assert layer.state.pending_order is None
        for name in ("gamma", "beta"):
            np.testing.assert_array_equal(optimizer.state.first_moment[name], first[name][::-1])
            if name in second:
                np.testing.assert_array_equal(optimizer.state.second_moment[name], second[name][::-1])


@pytest.mark.unit
class TestLoopHelpers:
    def test_early_stopping_waits_for_patience(self):
        stopper = EarlyStopping(patience=2)
        history = []
        for epoch, value in enumerate([1.0, 0.9, 0.95, 0.96], start=1):
            stopper.update(value, epoch)
            history.append(stopper.should_stop)
        assert history == [False, False, False, True]
        assert stopper.best_epoch == 2 and stopper.best == 0.9

    def test_gains_below_min_delta_do_not_count(self):
        stopper = EarlyStopping(patience=3, min_delta=0.01)
        assert stopper.update(1.0, 1)
        assert not stopper.update(0.995, 2)
        assert stopper.best_epoch == 1 and stopper.wait == 1

    def test_batches_cover_every_index_once(self):
        batches = list(iterate_batches(10, 4, np.random.default_rng(0)))
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))
        assert np.concatenate(list(iterate_batches(5, 2))).tolist() == [0, 1, 2, 3, 4]


def _smoke_train(smoke_config, splits, **overrides):
    train_cfg = dataclasses.replace(smoke_config.train, **overrides)
    model = build_model(smoke_config.model, seed=train_cfg.seed)
    record = train(model, splits.train, splits.val, train_cfg, smoke_config.optimizer, smoke_config.loss)
    return model, record


@pytest.mark.functional
class TestTraining:
    def test_record_is_complete(self, smoke_config, smoke_splits):
        model, record = _smoke_train(smoke_config, smoke_splits)
        assert record.status == "completed"
        assert 1 <= record.stopped_epoch <= smoke_config.train.max_epochs
        assert len(record.epochs) == record.stopped_epoch
        assert [e.epoch for e in record.epochs] == list(range(1, record.stopped_epoch + 1))
        assert record.best_val_loss == pytest.approx(min(record.val_losses), abs=1e-6)
        assert record.total_seconds == pytest.approx(record.epochs[-1].cumulative_seconds)
        assert record.label == "U-Net"

    def test_same_seed_same_run(self, smoke_config, smoke_splits):
        _, first = _smoke_train(smoke_config, smoke_splits)
        _, second = _smoke_train(smoke_config, smoke_splits)
        assert first.train_losses == second.train_losses
        assert first.val_losses == second.val_losses
        assert first.weights_fingerprint == second.weights_fingerprint

    def test_best_weights_are_restored(self, smoke_config, smoke_splits):
        model, record = _smoke_train(smoke_config, smoke_splits)
        assert record.best_weights_fingerprint == record.weights_fingerprint == weights_fingerprint(model)

    def test_clock_is_injectable(self, smoke_config, smoke_splits):
        ticks = iter(range(100))
        model = build_model(smoke_config.model)
        record = train(
            model,
            smoke_splits.train,
            smoke_splits.val,
            dataclasses.replace(smoke_config.train, max_epochs=2, patience=5),
            clock=lambda: float(next(ticks)),
        )
        assert [e.seconds for e in record.epochs] == [1.0, 1.0]
        assert record.total_seconds == 2.0

    def test_divergence_keeps_partial_record(self, smoke_config, smoke_splits, monkeypatch):
        monkeypatch.setattr(trainer_module, "get_loss", lambda cfg: lambda pred, target: Tensor(np.nan))
        with pytest.raises(TrainingError) as exc:
            _smoke_train(smoke_config, smoke_splits)
        assert exc.value.record.status == "diverged"
        assert exc.value.record.epochs == []
        assert exc.value.context["epoch"] == 1

    def test_empty_validation_set(self, smoke_config, smoke_splits):
        model = build_model(smoke_config.model)
        with pytest.raises(DataError):
            train(model, smoke_splits.train, TileDataset([]), smoke_config.train)

    def test_evaluate_and_predict(self, smoke_config, smoke_splits):
        model, _ = _smoke_train(smoke_config, smoke_splits, max_epochs=1)
        report = evaluate(model, smoke_splits.test, batch_size=3)
        assert 0.0 <= report.dsc <= 1.0
        probs = predict_tiles(model, smoke_splits.test.images(), batch_size=3)
        assert probs.shape == (len(smoke_splits.test), 1, 16, 16)
        assert np.all((probs > 0) & (probs < 1))

    def test_record_lines(self, smoke_config, smoke_splits, tmp_path):
        _, record = _smoke_train(smoke_config, smoke_splits, max_epochs=2, patience=5)
        path = write_record(tmp_path / "record.jsonl", record)
        assert len(path.read_text().splitlines()) == 2


def _record(label, epochs, seconds):
    return RunRecord(label=label, max_epochs=60, stopped_epoch=epochs, total_seconds=seconds, status="completed")


@pytest.mark.unit
class TestSpeedup:
    @pytest.mark.parametrize(
        "baseline, normalized, expected",
        [(("U-Net", 33, 320.0), ("U-NetMN", 8, 167.0), 1.92), (("SegNet", 32, 227.0), ("SegNetMN", 12, 123.0), 1.85)],
    )
    def test_reference_ratios(self, baseline, normalized, expected):
        rows = speedup_report(_record(*baseline), _record(*normalized))
        assert [r.model for r in rows] == [baseline[0], normalized[0]]
        assert rows[0].speedup == 1.0
        assert rows[1].speedup == pytest.approx(expected, abs=0.005)
        assert rows[1].training_epochs == normalized[1]

    def test_zero_time_is_neutral(self):
        rows = speedup_report(_record("U-Net", 1, 0.0), _record("U-NetMN", 1, 0.0))
        assert rows[1].speedup == 1.0

    def test_csv_columns(self, tmp_path):
        rows = speedup_report(_record("U-Net", 33, 320.0), _record("U-NetMN", 8, 167.0))
        table = read_csv(write_speedup(tmp_path / "speedup.csv", rows))
        assert list(table[0]) == SPEEDUP_COLUMNS
        assert table[1]["Model"] == "U-NetMN" and float(table[1]["Training Epochs"]) == 8.0


@pytest.mark.unit
class TestGridSelection:
    def test_full_grid(self):
        entries = enumerate_grid(GridConfig())
        assert len(entries) == GridConfig().size == 90
        first, last = entries[0], entries[-1]
        assert (first.optimizer, first.learning_rate, first.dropout, first.loss) == ("adam", 1e-4, 0.0, "dice")
        assert (last.optimizer, last.learning_rate, last.dropout, last.loss) == ("sgd", 1e-2, 0.5, "combined")
        assert [e.order for e in entries] == list(range(90))
        for opt, lr, rate in [("adam", 1e-4, 0.1), ("adam", 1e-3, 0.0)]:
            assert any(
                e.optimizer == opt and e.learning_rate == lr and e.dropout == rate and e.loss == "dice"
                for e in entries
            )

    def test_ties_go_to_lower_learning_rate_then_config_order(self):
        entries = [
            GridEntry(optimizer="adam", learning_rate=1e-2, dropout=0.0, loss="dice", order=0, val_dsc=0.8),
            GridEntry(optimizer="sgd", learning_rate=1e-3, dropout=0.0, loss="dice", order=1, val_dsc=0.8),
            GridEntry(optimizer="adam", learning_rate=1e-3, dropout=0.1, loss="focal", order=2, val_dsc=0.8),
            GridEntry(optimizer="adam", learning_rate=1e-3, dropout=0.1, loss="dice", order=3, val_dsc=0.8),
            GridEntry(optimizer="adam", learning_rate=1e-4, dropout=0.0, loss="dice", order=4, val_dsc=0.7),
        ]
        assert select_best(entries).order == 3
        assert select_best(entries[::-1]).order == 3

    def test_failed_entries_are_skipped(self):
        failure = RunFailure(error_type="TrainingError", error_message="diverged")
        entries = [
            GridEntry(optimizer="sgd", learning_rate=1e-2, dropout=0.0, loss="dice", order=0, failure=failure),
            GridEntry(optimizer="adam", learning_rate=1e-2, dropout=0.0, loss="dice", order=1, val_dsc=0.1),
        ]
        assert select_best(entries).order == 1
        assert select_best(entries[:1]) is None


@pytest.mark.integration
class TestExperiments:
    def test_small_grid_search(self, smoke_config, smoke_splits, tmp_path):
        grid = GridConfig(optimizers=("adam",), learning_rates=(1e-3,), dropout_rates=(0.0, 0.1), losses=("dice",))
        train_cfg = dataclasses.replace(smoke_config.train, max_epochs=2)
        result = grid_search(smoke_config.model, smoke_splits, grid, train_cfg, workers=2)
        assert [e.order for e in result.entries] == [0, 1]
        assert not result.failures
        assert result.selected is not None
        assert result.test_metrics == result.selected.record.test_metrics

        table = read_csv(write_grid_results(tmp_path / "grid.csv", result))
        assert list(table[0]) == GRID_COLUMNS
        assert sum(int(row["selected"]) for row in table) == 1

    def test_grid_records_divergence(self, smoke_config, smoke_splits, monkeypatch):
        monkeypatch.setattr(trainer_module, "get_loss", lambda cfg: lambda pred, target: Tensor(np.nan))
        grid = GridConfig(optimizers=("sgd",), learning_rates=(1e-2,), dropout_rates=(0.0,), losses=("focal",))
        result = grid_search(smoke_config.model, smoke_splits, grid, smoke_config.train)
        assert result.selected is None
        assert result.failures[0].failure.error_type == "TrainingError"
        assert result.failures[0].record.status == "diverged"

    def test_zone_cross_validation(self, smoke_config, smoke_dataset, tmp_path):
        train_cfg = dataclasses.replace(smoke_config.train, max_epochs=2)
        result = cross_validate(smoke_config.model, smoke_dataset, train_cfg, val_fraction=0.1)
        assert sorted(result.zone_reports) == [1, 2, 3, 4]
        assert not result.failures
        assert len(set(result.stats_fingerprints.values())) == 4

        rows = result.metric_rows()
        assert [r["metric"] for r in rows] == METRIC_COLUMNS
        dsc = rows[-1]
        assert dsc["mean"] == pytest.approx(np.mean([dsc[f"zone_{z}"] for z in range(1, 5)]))

        table = read_csv(write_cv_results(tmp_path / "cv.csv", [result]))
        assert list(table[0]) == CV_COLUMNS and len(table) == 6

    def test_normalization_comparison(self, smoke_config, smoke_splits):
        train_cfg = dataclasses.replace(smoke_config.train, max_epochs=2)
        result = compare_normalizations(smoke_config.model, smoke_splits, seeds=(0,), train_cfg=train_cfg)
        assert (result.baseline_label, result.mode_label) == ("U-Net", "U-NetMN")
        assert [r.model for r in result.speedup] == ["U-Net", "U-NetMN"]
        assert result.speedup[0].speedup == 1.0
        assert result.speedup_factor is not None and result.speedup_factor > 0
        assert set(result.test_metrics) == {"U-Net", "U-NetMN"}
