"""Command-line surface: exit codes, artifacts and run determinism."""

import json

import numpy as np
import pytest
from typer.testing import CliRunner

from modeseg.cli.main import app
from modeseg.core.raster import load_raster
from modeseg.core.reporting import read_csv

pytestmark = pytest.mark.functional

runner = CliRunner()

TRAIN_ARTIFACTS = [
    "config.json",
    "split.json",
    "model.json",
    "model.bin",
    "record.jsonl",
    "loss_curve.csv",
    "summary.json",
    "test_metrics.csv",
    "modeseg.log",
]


def _invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("smoke") / "run"
    result = _invoke("train", "--profile", "smoke", "--out", run_dir)
    assert result.exit_code == 0, result.output
    return run_dir


class TestBasicCommands:
    def test_version(self):
        result = _invoke("version")
        assert result.exit_code == 0
        assert "modeseg v" in result.output

    def test_help_lists_commands(self):
        result = _invoke("--help")
        assert result.exit_code == 0
        for command in ("synth", "train", "gridsearch", "crossval", "evaluate", "predict", "benchmark"):
            assert command in result.output

    def test_synth_writes_scene_and_mask(self, tmp_path):
        result = _invoke("synth", "--out", tmp_path, "--width", 40, "--height", 24, "--seed", 3)
        assert result.exit_code == 0, result.output
        assert {p.name for p in tmp_path.iterdir()} == {"scene.json", "scene.bin", "mask.pgm"}
        assert load_raster(tmp_path / "scene").shape == (24, 40)

    def test_synth_rejects_coverage_above_one(self, tmp_path):
        assert _invoke("synth", "--out", tmp_path, "--coverage", 1.5).exit_code == 2


class TestConfigCommands:
    def test_show_profile(self):
        result = _invoke("config", "show", "--profile", "smoke")
        assert result.exit_code == 0, result.output

    def test_unknown_profile(self):
        assert _invoke("config", "show", "--profile", "nope").exit_code == 2

    def test_init_then_show(self, tmp_path):
        target = tmp_path / "cfg.json"
        assert _invoke("config", "init", "--profile", "smoke", "--out", target).exit_code == 0
        document = json.loads(target.read_text())
        assert document["data"]["tile_size"] == 16
        assert _invoke("config", "show", "--config", target).exit_code == 0

    def test_missing_config_file(self, tmp_path):
        assert _invoke("config", "show", "--config", tmp_path / "absent.json").exit_code == 2


class TestTrainCommand:
    def test_missing_image(self, tmp_path):
        result = _invoke("train", "--image", "nope", "--mask", "nope.pgm", "--out", tmp_path / "run")
        assert result.exit_code == 1
        assert "image path not found" in result.output

    def test_image_without_mask(self, tmp_path):
        assert _invoke("train", "--image", "nope", "--out", tmp_path / "run").exit_code == 2

    def test_tile_size_not_divisible(self, tmp_path):
        result = _invoke("train", "--profile", "smoke", "--tile-size", 18, "--out", tmp_path / "run")
        assert result.exit_code == 2

    def test_artifacts(self, trained_run):
        assert sorted(p.name for p in trained_run.iterdir()) == sorted(TRAIN_ARTIFACTS)
        manifest = json.loads((trained_run / "model.json").read_text())
        assert manifest["metadata"]["tile_size"] == 16
        assert "standardization" in manifest["metadata"]
        summary = json.loads((trained_run / "summary.json").read_text())
        assert summary["status"] == "completed"
        assert len((trained_run / "record.jsonl").read_text().splitlines()) == summary["stopped_epoch"]

    @pytest.mark.slow
    def test_same_seed_same_artifacts(self, trained_run, tmp_path):
        again = tmp_path / "again"
        assert _invoke("train", "--profile", "smoke", "--out", again).exit_code == 0

        def losses(run):
            lines = (run / "record.jsonl").read_text().splitlines()
            return [(e["train_loss"], e["val_loss"]) for e in map(json.loads, lines)]

        def fingerprint(run):
            return json.loads((run / "model.json").read_text())["fingerprint"]

        assert losses(again) == losses(trained_run)
        assert fingerprint(again) == fingerprint(trained_run)


class TestCheckpointCommands:
    def test_evaluate_on_test_subset(self, trained_run):
        result = _invoke("evaluate", trained_run, "--subset", "test")
        assert result.exit_code == 0, result.output
        rows = read_csv(trained_run / "eval_metrics.csv")
        assert rows[0]["Model"] == "U-Net"
        assert 0.0 <= float(rows[0]["Dsc"]) <= 1.0

    def test_evaluate_rejects_unknown_subset(self, trained_run):
        assert _invoke("evaluate", trained_run, "--subset", "holdout").exit_code == 2

    def test_evaluate_without_checkpoint(self, tmp_path):
        assert _invoke("evaluate", tmp_path).exit_code == 1

    def test_predict_fills_uncovered_pixels(self, trained_run, tmp_path):
        assert _invoke("synth", "--out", tmp_path / "scene", "--width", 40, "--height", 40).exit_code == 0
        result = _invoke("predict", trained_run, "--image", tmp_path / "scene" / "scene", "--out", tmp_path / "pred")
        assert result.exit_code == 0, result.output

        prediction = load_raster(tmp_path / "pred").values
        assert prediction.shape == (40, 40)
        assert np.all(prediction[32:, :] == -1) and np.all(prediction[:, 32:] == -1)
        assert set(np.unique(prediction[:32, :32])) <= {0.0, 1.0}

    def test_predict_with_probabilities(self, trained_run, tmp_path):
        _invoke("synth", "--out", tmp_path / "scene", "--width", 32, "--height", 32)
        result = _invoke(
            "predict", trained_run, "--image", tmp_path / "scene" / "scene", "--out", tmp_path / "prob", "--probabilities"
        )
        assert result.exit_code == 0, result.output
        values = load_raster(tmp_path / "prob").values
        assert np.all((values >= 0) & (values <= 1))


class TestExperimentCommands:
    def test_gridsearch_rejects_bad_list(self, tmp_path):
        result = _invoke("gridsearch", "--profile", "smoke", "--learning-rates", "abc", "--out", tmp_path / "grid")
        assert result.exit_code == 2

    @pytest.mark.slow
    def test_small_gridsearch(self, tmp_path):
        result = _invoke(
            "gridsearch", "--profile", "smoke", "--epochs", 1,
            "--optimizers", "adam", "--learning-rates", "1e-3", "--dropouts", "0,0.1", "--losses", "dice",
            "--out", tmp_path / "grid",
        )
        assert result.exit_code == 0, result.output
        rows = read_csv(tmp_path / "grid" / "grid_results.csv")
        assert len(rows) == 2
        assert (tmp_path / "grid" / "test_metrics.csv").exists()

    @pytest.mark.slow
    def test_crossval_table(self, tmp_path):
        result = _invoke("crossval", "--profile", "smoke", "--epochs", 1, "--out", tmp_path / "cv")
        assert result.exit_code == 0, result.output
        rows = read_csv(tmp_path / "cv" / "cv_results.csv")
        assert len(rows) == 6
        assert all(row["zone_4"] != "" for row in rows)

    @pytest.mark.slow
    def test_benchmark_writes_speedup(self, tmp_path):
        result = _invoke("benchmark", "--profile", "smoke", "--epochs", 1, "--seeds", "0", "--out", tmp_path / "bench")
        assert result.exit_code == 0, result.output
        rows = read_csv(tmp_path / "bench" / "speedup.csv")
        assert [row["Model"] for row in rows] == ["U-Net", "U-NetMN"]
        assert float(rows[0]["Speed-up"]) == 1.0
