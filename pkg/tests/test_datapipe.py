"""Raster I/O, tiling, standardization, splits and synthetic scenes."""

import json

import numpy as np
import pytest

from modeseg.config import DataConfig, SynthConfig
from modeseg.core.datapipe import load_scene, load_tiles, prepare_stratified
from modeseg.core.exceptions import (
    ConfigurationError,
    DataError,
    DataFormatError,
    DimensionError,
)
from modeseg.core.raster import Raster, load_mask, load_raster, save_mask, save_raster
from modeseg.core.splits import stratified_split, zone_folds
from modeseg.core.synthetic import synth_scene
from modeseg.core.tiling import Tile, TileDataset, standardize, stitch, tile, tile_grid, zone_of

pytestmark = pytest.mark.unit


def _tiles(fractions, size=4):
    rng = np.random.default_rng(7)
    return [
        Tile(
            image=rng.standard_normal((1, size, size)).astype(np.float32),
            mask=np.zeros((1, size, size), dtype=np.float32),
            origin=(0, 4 * i),
            zone=1 + i % 4,
            water_fraction=f,
        )
        for i, f in enumerate(fractions)
    ]


class TestTiling:
    def test_grid_of_full_scene(self):
        assert tile_grid(6706, 11112, 256) == (26, 43)

    @pytest.mark.slow
    def test_full_scene_tile_count(self):
        raster = Raster(values=np.zeros((6706, 11112), dtype=np.float32))
        assert len(tile(raster, tile_size=256)) == 1118

    def test_remainders_are_dropped(self, rng):
        raster = Raster(values=rng.standard_normal((37, 50)))
        tiles = tile(raster, tile_size=16)
        assert len(tiles) == 2 * 3
        assert max(t.origin for t in tiles) == (16, 32)

    @pytest.mark.parametrize(
        "row, col, zone",
        [(0, 0, 1), (0, 32, 2), (32, 0, 3), (32, 32, 4), (16, 16, 4), (16, 0, 3), (0, 16, 2)],
    )
    def test_zone_ties_go_bottom_right(self, row, col, zone):
        assert zone_of(row, col, 16, 48, 48) == zone

    def test_tiles_touching_nodata_are_dropped(self, rng):
        values = rng.standard_normal((32, 32)).astype(np.float32)
        values[20, 5] = -9999.0
        raster = Raster(values=values, nodata=-9999.0)
        tiles = tile(raster, np.ones((32, 32)), tile_size=16)
        assert sorted(t.origin for t in tiles) == [(0, 0), (0, 16), (16, 16)]
        assert all(t.water_fraction == 1.0 for t in tiles)

    def test_mask_shape_must_match(self, rng):
        with pytest.raises(DimensionError):
            tile(Raster(values=rng.standard_normal((16, 16))), np.zeros((8, 8)), tile_size=8)

    def test_stitch_places_tiles_and_fills_gaps(self, rng):
        values = rng.standard_normal((32, 40)).astype(np.float32)
        values[0, 0] = -9999.0
        tiles = tile(Raster(values=values, nodata=-9999.0), tile_size=16)
        preds = np.stack([np.full((1, 16, 16), i / 10) for i in range(len(tiles))])
        out = stitch(preds, tiles, 32, 40)
        assert out.shape == (32, 40)
        assert np.all(out[:16, :16] == -1)
        assert np.all(out[:, 32:] == -1)
        np.testing.assert_allclose(out[16:, 16:32], preds[-1, 0])

    def test_stitch_needs_one_prediction_per_tile(self, rng):
        tiles = tile(Raster(values=rng.standard_normal((16, 16))), tile_size=8)
        with pytest.raises(DimensionError):
            stitch(np.zeros((3, 1, 8, 8)), tiles, 16, 16)


class TestStandardize:
    def test_uses_training_tiles_only(self):
        tiles = _tiles([0.0] * 4)
        tiles[3].image[...] = 1000.0
        scaled, stats = standardize(tiles, [0, 1, 2])
        pixels = np.concatenate([t.image.ravel() for t in tiles[:3]]).astype(np.float64)
        assert stats.mu == pytest.approx(pixels.mean())
        assert stats.sigma == pytest.approx(pixels.std())
        assert stats.count == 48
        train = np.concatenate([scaled[i].image.ravel() for i in range(3)])
        assert abs(train.mean()) < 1e-5
        assert scaled[3].image.min() > 100

    def test_zero_spread(self):
        tiles = _tiles([0.0, 0.0])
        for t in tiles:
            t.image[...] = 3.0
        with pytest.raises(DataError):
            standardize(tiles, [0, 1])

    def test_original_tiles_are_untouched(self):
        tiles = _tiles([0.0, 0.0])
        before = tiles[0].image.copy()
        standardize(tiles, [0, 1])
        np.testing.assert_array_equal(tiles[0].image, before)


FRACTIONS = [0.0] * 14 + [0.05] * 6 + [0.2] * 8 + [0.45] * 6 + [0.8] * 7


class TestStratifiedSplit:
    def test_partitions_every_tile(self):
        plan = stratified_split(_tiles(FRACTIONS), seed=3)
        assert plan.covers(len(FRACTIONS))
        assert (len(plan.train), len(plan.val), len(plan.test)) == (29, 5, 7)

    def test_each_stratum_is_split_by_fraction(self):
        plan = stratified_split(_tiles(FRACTIONS), seed=3)
        train = set(plan.train)
        for label, members in plan.strata.items():
            assert sum(i in train for i in members) == int(np.floor(0.7 * len(members) + 0.5)), label

    def test_seed_determinism(self):
        tiles = _tiles(FRACTIONS)
        assert stratified_split(tiles, seed=5) == stratified_split(tiles, seed=5)
        assert stratified_split(tiles, seed=5).train != stratified_split(tiles, seed=6).train

    def test_small_strata_are_merged(self):
        plan = stratified_split(_tiles([0.0] * 10 + [0.5] * 2), seed=0)
        assert list(plan.strata) == ["0-1%+30-60%"]

    def test_needs_ten_tiles(self):
        with pytest.raises(DataError):
            stratified_split(_tiles([0.0] * 9))


class TestZoneFolds:
    def test_each_fold_tests_one_zone(self):
        tiles = _tiles([0.1] * 20)
        plans = zone_folds(tiles, val_fraction=0.1, seed=1)
        assert [p.test_zone for p in plans] == [1, 2, 3, 4]
        for plan in plans:
            assert plan.covers(20)
            assert {tiles[i].zone for i in plan.test} == {plan.test_zone}
            assert plan.test_zone not in {tiles[i].zone for i in plan.train + plan.val}
            assert len(plan.val) == 2

    def test_empty_zone(self):
        tiles = _tiles([0.1] * 3)
        with pytest.raises(ConfigurationError):
            zone_folds(tiles)

    def test_smoke_scene_has_nine_tiles_per_zone(self, smoke_dataset):
        assert np.bincount(smoke_dataset.zones, minlength=5)[1:].tolist() == [9, 9, 9, 9]


class TestRasterIO:
    def test_raster_round_trip(self, rng, tmp_path):
        raster = Raster(values=rng.standard_normal((5, 7)), nodata=-9999.0)
        header = save_raster(tmp_path / "scene", raster)
        assert json.loads(header.read_text())["dtype"] == "f32le"
        loaded = load_raster(tmp_path / "scene.bin")
        np.testing.assert_array_equal(loaded.values, raster.values)
        assert loaded.nodata == -9999.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_raster(tmp_path / "absent")

    def test_size_disagrees_with_header(self, rng, tmp_path):
        save_raster(tmp_path / "scene", Raster(values=rng.standard_normal((4, 4))))
        data = tmp_path / "scene.bin"
        data.write_bytes(data.read_bytes()[:-4])
        with pytest.raises(DataFormatError):
            load_raster(tmp_path / "scene")

    def test_non_finite_pixels_outside_nodata(self, tmp_path):
        values = np.zeros((3, 3), dtype=np.float32)
        values[1, 1] = np.nan
        save_raster(tmp_path / "scene", Raster(values=values))
        with pytest.raises(DataError):
            load_raster(tmp_path / "scene")

    def test_pgm_mask_round_trip(self, rng, tmp_path):
        mask = (rng.random((6, 9)) < 0.5).astype(np.uint8)
        save_mask(tmp_path / "mask.pgm", mask)
        loaded = load_mask(tmp_path / "mask.pgm")
        assert loaded.shape == (6, 9)
        np.testing.assert_array_equal(loaded, mask)

    def test_pgm_header_comments(self, tmp_path):
        path = tmp_path / "mask.pgm"
        path.write_bytes(b"P5\n# water\n2 1\n255\n" + bytes([255, 0]))
        np.testing.assert_array_equal(load_mask(path), [[1, 0]])

    def test_ascii_pgm_is_rejected(self, tmp_path):
        path = tmp_path / "mask.pgm"
        path.write_bytes(b"P2\n2 1\n255\n255 0\n")
        with pytest.raises(DataFormatError):
            load_mask(path)

    def test_mask_in_raster_format(self, tmp_path):
        save_mask(tmp_path / "mask", np.eye(3))
        np.testing.assert_array_equal(load_mask(tmp_path / "mask"), np.eye(3))


class TestSynthetic:
    def test_same_seed_same_scene(self):
        cfg = SynthConfig(width=48, height=40, seed=11)
        (a, mask_a), (b, mask_b) = synth_scene(gen=cfg), synth_scene(gen=cfg)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(mask_a, mask_b)
        assert a.shape == (40, 48)

    def test_coverage_and_clipping(self):
        cfg = SynthConfig(width=96, height=96, coverage=0.35, looks=4, seed=2)
        raster, mask = synth_scene(gen=cfg)
        assert abs(mask.mean() - 0.35) < 0.01
        assert raster.values.min() >= cfg.clip_min and raster.values.max() <= cfg.clip_max
        assert raster.values[mask == 1].mean() < raster.values[mask == 0].mean()

    @pytest.mark.parametrize("coverage, expected", [(0.0, 0), (1.0, 1)])
    def test_extreme_coverage(self, coverage, expected):
        _, mask = synth_scene(gen=SynthConfig(width=16, height=16, coverage=coverage))
        assert np.all(mask == expected)

    def test_nodata_margins(self):
        cfg = SynthConfig(width=64, height=32, nodata_margin=8)
        raster, mask = synth_scene(gen=cfg)
        assert raster.nodata == cfg.nodata_value
        assert raster.nodata_mask[0, :8].all() and not raster.nodata_mask[0, 8:].any()
        assert raster.nodata_mask[-1, -8:].all()
        assert not mask[raster.nodata_mask].any()

    def test_coverage_out_of_range(self):
        with pytest.raises(ConfigurationError):
            SynthConfig(coverage=1.5)


class TestDatapipe:
    def test_synthetic_scene_when_no_paths(self, smoke_config):
        raster, mask = load_scene(smoke_config.data)
        assert raster.shape == mask.shape == (96, 96)

    def test_files_on_disk(self, tmp_path):
        raster, mask = synth_scene(gen=SynthConfig(width=32, height=32, seed=4))
        save_raster(tmp_path / "scene", raster)
        save_mask(tmp_path / "mask.pgm", mask)
        cfg = DataConfig(image_path=str(tmp_path / "scene"), mask_path=str(tmp_path / "mask.pgm"), tile_size=16)
        dataset = load_tiles(cfg)
        assert isinstance(dataset, TileDataset) and len(dataset) == 4
        assert dataset.tile_size == 16

    def test_mask_dimension_mismatch(self, tmp_path):
        raster, _ = synth_scene(gen=SynthConfig(width=32, height=32))
        save_raster(tmp_path / "scene", raster)
        save_mask(tmp_path / "mask.pgm", np.zeros((16, 32)))
        cfg = DataConfig(image_path=str(tmp_path / "scene"), mask_path=str(tmp_path / "mask.pgm"))
        with pytest.raises(DimensionError):
            load_scene(cfg)

    def test_tile_larger_than_scene(self):
        cfg = DataConfig(tile_size=64, synth=SynthConfig(width=32, height=32))
        with pytest.raises(DataError):
            load_tiles(cfg)

    def test_image_without_mask_is_a_config_error(self):
        with pytest.raises(ConfigurationError):
            DataConfig(image_path="scene")

    def test_prepared_splits_are_standardized_on_train(self, smoke_dataset, smoke_config):
        splits = prepare_stratified(smoke_dataset, smoke_config.data)
        assert len(splits.train) + len(splits.val) + len(splits.test) == len(smoke_dataset)
        train = splits.train.images()
        assert abs(train.mean()) < 1e-4
        assert train.std() == pytest.approx(1.0, abs=1e-4)
        assert splits.stats.count == len(splits.train) * 16 * 16
