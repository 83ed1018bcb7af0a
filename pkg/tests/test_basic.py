"""Basic tests for the modeseg package surface and configuration layer."""

import re
from pathlib import Path

import pytest

import modeseg
from modeseg.config import (
    ConfigBuilder,
    ConfigProfiles,
    ExperimentConfig,
    ModelSpec,
    NormConfig,
    get_default_config,
    set_default_config,
)
from modeseg.core.exceptions import ConfigurationError, ModeSegError


def test_package_imports():
    """Test that main package components can be imported."""
    for name in ("Tensor", "build_model", "train", "grid_search", "cross_validate", "quick_train"):
        assert hasattr(modeseg, name)
    assert set(modeseg.__all__) <= set(dir(modeseg))


def test_version():
    """Test package version matches the project manifest."""
    pyproject = (Path(__file__).resolve().parents[1] / "pyproject.toml").read_text()
    declared = re.search(r'^version\s*=\s*"(.+?)"', pyproject, re.M).group(1)
    assert modeseg.__version__ == declared


def test_author():
    """Test author information."""
    assert modeseg.__author__ == "Himasha Herath"


@pytest.mark.unit
class TestConfigBuilder:
    def test_fluent_build(self):
        config = (
            ConfigBuilder()
            .with_arch("segnet")
            .with_norm("mode", modes=3)
            .with_model_size(2, 8)
            .with_optimizer("sgd", 1e-2)
            .with_loss("focal")
            .with_dropout(0.2)
            .with_tile_size(32)
            .with_seed(9)
            .build()
        )
        assert config.model.label == "SegNetMN"
        assert config.model.norm.modes == 3
        assert (config.model.depth, config.model.base_channels) == (2, 8)
        assert (config.optimizer.kind, config.optimizer.learning_rate) == ("sgd", 1e-2)
        assert config.loss.kind == "focal" and config.model.dropout_rate == 0.2
        assert config.data.tile_size == 32 and config.train.seed == 9

    def test_desk_scale(self):
        config = ConfigBuilder().desk_scale().build()
        assert (config.model.depth, config.model.base_channels, config.data.tile_size) == (3, 16, 64)
        assert config.train.batch_size == 32
        assert ConfigProfiles.unet_mode_desk().train.batch_size == 32
        synth = config.data.synth
        assert (synth.height // 64) * (synth.width // 64) == 208

    def test_dict_round_trip(self):
        config = ConfigProfiles.unet_mode_desk()
        assert ExperimentConfig.from_dict(config.to_dict()) == config

    def test_unknown_keys_are_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"model": {"width": 3}})

    def test_environment_defaults(self, monkeypatch):
        monkeypatch.setenv("MODESEG_SEED", "7")
        monkeypatch.setenv("MODESEG_TILE_SIZE", "128")
        monkeypatch.setenv("MODESEG_WORKERS", "3")
        config = ExperimentConfig.from_env()
        assert config.train.seed == config.data.split_seed == config.data.synth.seed == 7
        assert config.data.tile_size == 128 and config.workers == 3

    @pytest.mark.parametrize(
        "build",
        [
            lambda: NormConfig(kind="group"),
            lambda: NormConfig(kind="mode", modes=0),
            lambda: ModelSpec(arch="fcn"),
            lambda: ModelSpec(dropout_rate=1.0),
        ],
    )
    def test_invalid_values(self, build):
        with pytest.raises(ConfigurationError) as exc:
            build()
        assert isinstance(exc.value, ModeSegError)
        assert exc.value.suggestions


@pytest.mark.unit
def test_error_context_and_suggestions():
    error = ModeSegError("tile rejected", context={"tile": 3}).add_context("zone", 2).add_suggestion("Retile")
    assert "tile=3, zone=2" in str(error) and "Retile" in str(error)
    payload = error.to_dict()
    assert payload["error_type"] == "ModeSegError"
    assert payload["suggestions"] == ["Retile"]
    assert payload["original_error"] is None


@pytest.mark.unit
class TestConfigProfiles:
    def test_every_profile_builds(self):
        for name in ConfigProfiles.names():
            assert isinstance(ConfigProfiles.get(name), ExperimentConfig)

    def test_optimal_grid_points(self):
        unet, segnet = ConfigProfiles.unet_full(), ConfigProfiles.segnet_full()
        assert (unet.optimizer.kind, unet.optimizer.learning_rate, unet.model.dropout_rate, unet.loss.kind) == (
            "adam", 1e-4, 0.1, "dice"
        )
        assert (segnet.optimizer.kind, segnet.optimizer.learning_rate, segnet.model.dropout_rate) == ("adam", 1e-3, 0.0)
        assert unet.data.tile_size == segnet.data.tile_size == 256

    def test_unknown_profile(self):
        with pytest.raises(ConfigurationError):
            ConfigProfiles.get("deeplab")

    def test_default_config_accessors(self):
        previous = get_default_config()
        try:
            smoke = ConfigProfiles.smoke()
            set_default_config(smoke)
            assert get_default_config() is smoke
        finally:
            set_default_config(previous)


@pytest.mark.functional
def test_quick_train():
    """Test quick_train convenience function on the smoke profile."""
    model, record = modeseg.quick_train("smoke")
    assert record.status == "completed"
    assert record.test_metrics is not None
    assert model.parameter_count() == 7557
