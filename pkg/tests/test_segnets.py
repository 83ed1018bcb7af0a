"""Mini U-Net / SegNet construction, forward contract, gradients and checkpoints."""

import dataclasses
import json

import numpy as np
import pytest

from modeseg.autodiff import Tensor, gradcheck
from modeseg.config import ModelSpec, NormConfig, OptimizerConfig
from modeseg.core.checkpoint import load_checkpoint, save_checkpoint, weights_fingerprint
from modeseg.core.exceptions import CheckpointError, ConfigurationError, ContractError, NumericalError
from modeseg.core.objectives import dice_loss
from modeseg.core.optimizers import make_optimizer
from modeseg.core.segnets import MiniSegNet, MiniUNet, build_model, build_segnet, forward

pytestmark = pytest.mark.unit


def _spec(arch="unet", norm="batch", modes=2, dropout=0.0):
    return ModelSpec(
        arch=arch, depth=2, base_channels=4, norm=NormConfig(kind=norm, modes=modes), dropout_rate=dropout
    )


class TestConstruction:
    @pytest.mark.parametrize(
        "arch, norm, expected",
        [
            ("unet", "none", 7397),
            ("unet", "batch", 7557),
            ("unet", "mode", 7717),
            ("segnet", "batch", 2333),
        ],
    )
    def test_parameter_count(self, arch, norm, expected):
        assert build_model(_spec(arch, norm)).parameter_count() == expected

    def test_build_model_dispatches_on_arch(self):
        assert isinstance(build_model(_spec("unet")), MiniUNet)
        assert isinstance(build_model(_spec("segnet")), MiniSegNet)

    def test_builder_rejects_other_arch(self):
        with pytest.raises(ConfigurationError):
            build_segnet(_spec("unet"))

    def test_same_seed_same_weights(self):
        a, b = build_model(_spec(), seed=3), build_model(_spec(), seed=3)
        assert weights_fingerprint(a) == weights_fingerprint(b)
        assert weights_fingerprint(a) != weights_fingerprint(build_model(_spec(), seed=4))

    def test_parameter_names_are_dotted_paths(self):
        names = [name for name, _ in build_model(_spec("unet", "mode")).named_parameters()]
        assert names[0] == "encoders.0.first.conv.weight"
        assert "encoders.0.first.norm.gamma" in names
        assert names[-1] == "head.bias"

    def test_label(self):
        assert _spec("unet", "mode").label == "U-NetMN"
        assert _spec("segnet", "batch").label == "SegNet"


class TestForward:
    @pytest.mark.parametrize("arch", ["unet", "segnet"])
    @pytest.mark.parametrize("norm", ["none", "batch", "mode"])
    def test_output_is_probability_map(self, arch, norm, rng):
        model = build_model(_spec(arch, norm))
        out = forward(model, rng.standard_normal((2, 1, 16, 16)).astype(np.float32), training=True)
        assert out.shape == (2, 1, 16, 16)
        assert np.all((out.data > 0) & (out.data < 1))

    def test_tile_size_must_divide_by_pooling(self):
        model = build_model(_spec())
        with pytest.raises(ConfigurationError):
            model(Tensor(np.zeros((1, 1, 10, 10))))

    def test_rejects_multi_band_input(self):
        with pytest.raises(ConfigurationError):
            build_model(_spec())(Tensor(np.zeros((1, 2, 16, 16))))

    def test_rejects_non_finite_input(self):
        x = np.zeros((1, 1, 8, 8))
        x[0, 0, 3, 3] = np.nan
        with pytest.raises(NumericalError) as exc:
            build_model(_spec())(Tensor(x))
        assert exc.value.layer == "input"

    def test_mode_model_needs_training_before_inference(self, rng):
        model = build_model(_spec(norm="mode"))
        with pytest.raises(ContractError):
            forward(model, rng.standard_normal((1, 1, 8, 8)), training=False)

    @pytest.mark.parametrize("norm", ["batch", "mode"])
    def test_inference_is_per_tile(self, norm, rng):
        model = build_model(_spec(norm=norm, dropout=0.3))
        x = rng.standard_normal((4, 1, 8, 8)).astype(np.float32)
        forward(model, x, training=True)
        batched = forward(model, x, training=False).data
        single = forward(model, x[2:3], training=False).data
        np.testing.assert_allclose(single, batched[2:3], rtol=1e-5, atol=1e-6)

    def test_dropout_reseed_is_reproducible(self, rng):
        model = build_model(_spec(dropout=0.5))
        x = rng.standard_normal((2, 1, 8, 8)).astype(np.float32)
        model.reseed_dropout(9)
        first = forward(model, x, training=True).data
        model.reseed_dropout(9)
        np.testing.assert_array_equal(forward(model, x, training=True).data, first)


class TestEndToEndGradients:
    """Gradient check through a whole depth-2, width-4 network in 64-bit."""

    @pytest.mark.slow
    @pytest.mark.parametrize("arch, norm", [("unet", "batch"), ("unet", "mode"), ("segnet", "batch")])
    def test_selected_parameters(self, arch, norm, rng, float64):
        model = build_model(_spec(arch, norm), seed=1)
        x = Tensor(rng.standard_normal((2, 1, 8, 8)))
        target = (rng.random((2, 1, 8, 8)) < 0.4).astype(np.float64)
        model.train()
        model(x)
        model.set_mixture_updates(False)

        params = dict(model.named_parameters())
        chosen = [params["encoders.0.first.conv.weight"], params["head.weight"], params["head.bias"]]
        chosen += [p for name, p in params.items() if name.endswith("norm.gamma")][:2]

        result = gradcheck(lambda: dice_loss(model(x), target), chosen, tolerance=1e-3)
        assert result.passed, result.failures()


def _dice_step(model, x, target, learning_rate):
    """One SGD step on the Dice loss; returns the loss before and after it."""
    optimizer = make_optimizer(model, OptimizerConfig(kind="sgd", learning_rate=learning_rate))
    optimizer.zero_grad()
    before = dice_loss(forward(model, x, training=True), target)
    before.backward()
    optimizer.step()
    after = dice_loss(forward(model, x, training=True), target)
    return float(before.data), float(after.data)


class TestTrainingStep:
    @pytest.mark.parametrize("arch", ["unet", "segnet"])
    def test_single_mode_trains_like_batch_norm(self, arch, rng, float64):
        x = rng.standard_normal((4, 1, 8, 8))
        target = (x > 0.3).astype(np.float64)
        trajectories = {}
        for norm in ("batch", "mode"):
            model = build_model(_spec(arch, norm, modes=1), seed=5)
            optimizer = make_optimizer(model, OptimizerConfig(kind="sgd", learning_rate=0.1))
            losses = []
            for _ in range(3):
                optimizer.zero_grad()
                loss = dice_loss(forward(model, x, training=True), target)
                loss.backward()
                optimizer.step()
                losses.append(float(loss.data))
            trajectories[norm] = losses
        np.testing.assert_allclose(trajectories["mode"], trajectories["batch"], rtol=1e-9)

    @pytest.mark.slow
    @pytest.mark.parametrize("norm", ["batch", "mode"])
    def test_one_step_lowers_dice_loss(self, norm, float64):
        lowered = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = rng.standard_normal((4, 1, 8, 8))
            target = (x > 0.3).astype(np.float64)
            model = build_model(_spec("unet", norm), seed=seed)
            # initialize the mixtures, then hold them so both losses see the same statistics
            forward(model, x, training=True)
            model.set_mixture_updates(False)
            before, after = _dice_step(model, x, target, learning_rate=1e-4)
            lowered += after < before
        assert lowered >= 95


class TestCheckpoint:
    def _trained(self, rng, norm="mode"):
        model = build_model(_spec(norm=norm), seed=2)
        forward(model, rng.standard_normal((4, 1, 8, 8)).astype(np.float32), training=True)
        return model

    @pytest.mark.parametrize("norm", ["batch", "mode"])
    def test_round_trip(self, norm, rng, tmp_path):
        model = self._trained(rng, norm)
        save_checkpoint(model, tmp_path, metadata={"tile_size": 8})
        loaded, manifest = load_checkpoint(tmp_path)

        assert manifest.fingerprint == weights_fingerprint(model) == weights_fingerprint(loaded)
        assert manifest.metadata == {"tile_size": 8}
        x = rng.standard_normal((2, 1, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(
            forward(loaded, x, training=False).data, forward(model, x, training=False).data
        )

    def test_manifest_lists_parameters_then_buffers(self, rng, tmp_path):
        save_checkpoint(self._trained(rng), tmp_path)
        entries = json.loads((tmp_path / "model.json").read_text())["entries"]
        kinds = [e["kind"] for e in entries]
        assert kinds.index("buffer") > 0
        assert all(e["dtype"] == "f32le" for e in entries)

    def test_spec_mismatch(self, rng, tmp_path):
        model = self._trained(rng)
        save_checkpoint(model, tmp_path)
        other = dataclasses.replace(model.spec, base_channels=8)
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path, spec=other)

    def test_truncated_buffer(self, rng, tmp_path):
        save_checkpoint(self._trained(rng), tmp_path)
        data = (tmp_path / "model.bin").read_bytes()
        (tmp_path / "model.bin").write_bytes(data[:-4])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path)

    def test_corrupted_weights_fail_fingerprint(self, rng, tmp_path):
        save_checkpoint(self._trained(rng), tmp_path)
        data = bytearray((tmp_path / "model.bin").read_bytes())
        data[0] ^= 0xFF
        (tmp_path / "model.bin").write_bytes(bytes(data))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path)

    def test_state_dict_shape_mismatch(self):
        small, large = build_model(_spec()), build_model(dataclasses.replace(_spec(), base_channels=8))
        with pytest.raises(CheckpointError):
            small.load_state_dict(large.state_dict())
