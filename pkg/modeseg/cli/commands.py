"""CLI command implementations."""

import dataclasses
import json
import logging
import platform
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from ..config import ExperimentConfig, GridConfig, SynthConfig
from ..core.checkpoint import load_checkpoint, save_checkpoint
from ..core.datapipe import load_tiles, prepare_stratified
from ..core.exceptions import TrainingError
from ..core.experiments import compare_normalizations, cross_validate, grid_search
from ..core.models import RunRecord, SplitPlan, StandardizationStats
from ..core.raster import Raster, load_raster, save_mask, save_raster
from ..core.reporting import (
    write_cv_results,
    write_grid_results,
    write_loss_curves,
    write_record,
    write_speedup,
    write_split,
    write_summary,
    write_test_metrics,
)
from ..core.segnets import build_model
from ..core.synthetic import synth_scene
from ..core.tiling import TileDataset, apply_standardization, stitch, tile
from ..core.trainer import evaluate, predict_tiles, train
from .config_manager import ConfigManager, RunDirectory
from .constants import ARTIFACTS, EXIT_OK, MASK_NAME, SCENE_NAME, SUCCESS_MESSAGES
from .error_handler import ErrorHandler
from .exceptions import CLIRuntimeError
from .output_formatter import OutputFormatter
from .validators import InputValidator

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(console: Console, verbose: bool, log_file: Optional[Path] = None) -> None:
    """Root logging: optional file handler plus a rich console handler."""
    level = logging.DEBUG if verbose else logging.INFO
    handlers: List[logging.Handler] = [RichHandler(console=console, show_path=False, markup=False)]
    if log_file is not None:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handlers.append(file_handler)
    logging.basicConfig(level=level, format="%(message)s", handlers=handlers, force=True)


class BaseCommand:
    """Shared plumbing: config resolution, run directories, logging and error reporting."""

    name = "command"

    def __init__(self, console: Console):
        self.console = console
        self.error_handler = ErrorHandler(console)
        self.output_formatter = OutputFormatter(console)
        self.validator = InputValidator()

    def _prepare_config(
        self, config_file: Optional[str], profile: Optional[str], overrides: Dict[str, Any]
    ) -> ExperimentConfig:
        self.validator.validate_data_pair(overrides.get("image"), overrides.get("mask"))
        self.validator.require_paths(
            config=config_file, image=overrides.get("image"), mask=overrides.get("mask")
        )
        base = ConfigManager(config_file).load_config(profile)
        return ConfigManager.apply_overrides(base, overrides)

    def _open_run(self, config: ExperimentConfig, label: str, out: Optional[str], verbose: bool) -> RunDirectory:
        run = RunDirectory.create(config.run_root, self.name, label, out)
        setup_logging(self.console, verbose, run.artifact("log"))
        run.write_config(config)
        logger.info(f"Run directory: {run.path}")
        return run

    def _fail(self, error: Exception, verbose: bool) -> int:
        self.error_handler.verbose = verbose
        return self.error_handler.handle_error(error, self.name)

    def _success(self, path: Path) -> int:
        self.console.print(SUCCESS_MESSAGES[self.name].format(path=path), style="bold green")
        return EXIT_OK


class SynthCommand(BaseCommand):
    """Handle the synth command."""

    name = "synth"

    def execute(
        self,
        out: str,
        width: int,
        height: int,
        coverage: float,
        seed: int,
        looks: int = 0,
        nodata_margin: int = 0,
        verbose: bool = False,
    ) -> int:
        try:
            cfg = SynthConfig(
                width=width,
                height=height,
                coverage=coverage,
                seed=seed,
                looks=looks,
                nodata_margin=nodata_margin,
            )
            directory = Path(out)
            directory.mkdir(parents=True, exist_ok=True)
            setup_logging(self.console, verbose)
            raster, mask = synth_scene(gen=cfg)
            header = save_raster(directory / SCENE_NAME, raster)
            save_mask(directory / MASK_NAME, mask)
            self.console.print(f"Water fraction: {mask.mean():.3f}")
            return self._success(header)
        except Exception as e:
            return self._fail(e, verbose)


class TrainCommand(BaseCommand):
    """Handle the train command: one model on a stratified split."""

    name = "train"

    def execute(
        self,
        config_file: Optional[str] = None,
        profile: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
        out: Optional[str] = None,
        verbose: bool = False,
    ) -> int:
        try:
            config = self._prepare_config(config_file, profile, overrides or {})
            run = self._open_run(config, config.model.label, out, verbose)

            dataset = load_tiles(config.data)
            splits = prepare_stratified(dataset, config.data)
            write_split(run.artifact("split"), splits.plan, {"standardization": splits.stats.model_dump()})

            model = build_model(config.model, seed=config.train.seed)
            try:
                record = train(model, splits.train, splits.val, config.train, config.optimizer, config.loss)
            except TrainingError as e:
                if isinstance(e.record, RunRecord):
                    write_record(run.artifact("record"), e.record)
                    write_loss_curves(run.artifact("loss_curve"), [e.record])
                raise

            record.test_metrics = evaluate(model, splits.test, config.train.batch_size)
            save_checkpoint(
                model,
                run.path,
                metadata={
                    "label": record.label,
                    "tile_size": config.data.tile_size,
                    "standardization": splits.stats.model_dump(),
                    "best_epoch": record.best_epoch,
                },
            )
            write_record(run.artifact("record"), record)
            write_loss_curves(run.artifact("loss_curve"), [record])
            write_summary(run.artifact("summary"), record)
            write_test_metrics(run.artifact("test_metrics"), {record.label: record.test_metrics})

            self.output_formatter.show_record(record)
            self.output_formatter.show_metrics({record.label: record.test_metrics})
            return self._success(run.path)
        except Exception as e:
            return self._fail(e, verbose)


class GridSearchCommand(BaseCommand):
    """Handle the gridsearch command."""

    name = "gridsearch"

    def execute(
        self,
        config_file: Optional[str] = None,
        profile: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
        grid_overrides: Optional[Dict[str, Any]] = None,
        out: Optional[str] = None,
        verbose: bool = False,
    ) -> int:
        try:
            config = self._prepare_config(config_file, profile, overrides or {})
            changes = {k: tuple(v) for k, v in (grid_overrides or {}).items() if v is not None}
            grid = dataclasses.replace(config.grid, **changes)
            run = self._open_run(config, config.model.label, out, verbose)
            (run.path / "grid.json").write_text(json.dumps(dataclasses.asdict(grid), indent=2))

            dataset = load_tiles(config.data)
            splits = prepare_stratified(dataset, config.data)
            write_split(run.artifact("split"), splits.plan, {"standardization": splits.stats.model_dump()})

            result = grid_search(
                config.model, splits, grid, config.train, config.optimizer, config.loss, config.workers
            )
            write_grid_results(run.artifact("grid_results"), result)
            self.output_formatter.show_grid(result)
            if result.selected is None:
                raise CLIRuntimeError(f"All {len(result.entries)} grid configurations failed")

            label = f"{config.model.label} ({result.selected.label})"
            write_test_metrics(run.artifact("test_metrics"), {label: result.test_metrics})
            self.output_formatter.show_metrics({label: result.test_metrics}, title="Selected configuration on test")
            if result.failures:
                self.error_handler.show_warning(f"{len(result.failures)} configuration(s) failed; see grid_results.csv")
            return self._success(run.artifact("grid_results"))
        except Exception as e:
            return self._fail(e, verbose)


class CrossValCommand(BaseCommand):
    """Handle the crossval command: four zone folds per normalization variant."""

    name = "crossval"

    def execute(
        self,
        config_file: Optional[str] = None,
        profile: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
        norms: Optional[List[str]] = None,
        out: Optional[str] = None,
        verbose: bool = False,
    ) -> int:
        try:
            config = self._prepare_config(config_file, profile, overrides or {})
            specs = [
                dataclasses.replace(config.model, norm=dataclasses.replace(config.model.norm, kind=kind))
                for kind in (norms or [config.model.norm.kind])
            ]
            run = self._open_run(config, config.model.label, out, verbose)
            dataset = load_tiles(config.data)

            results = []
            for spec in specs:
                result = cross_validate(
                    spec,
                    dataset,
                    config.train,
                    config.optimizer,
                    config.loss,
                    val_fraction=config.data.val_fraction,
                    seed=config.data.split_seed,
                    workers=config.workers,
                )
                for zone, record in result.records.items():
                    write_record(run.path / "folds" / f"{spec.label}-zone{zone}.jsonl", record)
                results.append(result)

            write_cv_results(run.artifact("cv_results"), results)
            self.output_formatter.show_cross_validation(results)
            failed = {r.label: sorted(r.failures) for r in results if r.failures}
            if failed:
                raise CLIRuntimeError(f"Cross-validation folds failed (model: zones): {failed}")
            return self._success(run.artifact("cv_results"))
        except Exception as e:
            return self._fail(e, verbose)


class CheckpointCommand(BaseCommand):
    """Commands that start from a trained run directory."""

    def _load(self, checkpoint: str):
        self.validator.validate_checkpoint_dir(checkpoint)
        model, manifest = load_checkpoint(checkpoint)
        if "standardization" not in manifest.metadata:
            raise CLIRuntimeError(f"Checkpoint in {checkpoint} carries no standardization statistics")
        stats = StandardizationStats.model_validate(manifest.metadata["standardization"])
        return model, manifest, stats


class EvaluateCommand(CheckpointCommand):
    """Handle the evaluate command."""

    name = "evaluate"

    def execute(
        self,
        checkpoint: str,
        subset: str = "all",
        config_file: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
        out: Optional[str] = None,
        verbose: bool = False,
    ) -> int:
        try:
            self.validator.validate_subset(subset)
            run_config = Path(checkpoint) / ARTIFACTS["config"]
            if config_file is None and run_config.exists():
                config_file = str(run_config)
            config = self._prepare_config(config_file, None, overrides or {})
            setup_logging(self.console, verbose)
            model, manifest, stats = self._load(checkpoint)
            model.spec.check_tile_size(config.data.tile_size)

            dataset = load_tiles(config.data)
            indices = self._subset_indices(Path(checkpoint), subset, len(dataset))
            scaled = apply_standardization(dataset.subset(indices), stats)
            report = evaluate(model, scaled, config.train.batch_size)

            label = manifest.metadata.get("label", model.spec.label)
            target = Path(out) if out else Path(checkpoint) / ARTIFACTS["eval_metrics"]
            write_test_metrics(target, {label: report})
            self.output_formatter.show_metrics({label: report}, title=f"Metrics on {subset} tiles")
            return self._success(target)
        except Exception as e:
            return self._fail(e, verbose)

    def _subset_indices(self, run_dir: Path, subset: str, n_tiles: int) -> List[int]:
        if subset == "all":
            return list(range(n_tiles))
        split_path = run_dir / ARTIFACTS["split"]
        if not split_path.exists():
            raise CLIRuntimeError(f"--subset {subset} needs {split_path}")
        plan = SplitPlan.model_validate(json.loads(split_path.read_text()))
        if not plan.covers(n_tiles):
            raise CLIRuntimeError(f"{split_path} does not match the {n_tiles} tiles of this dataset")
        return getattr(plan, subset)


class PredictCommand(CheckpointCommand):
    """Handle the predict command: tile, infer, stitch."""

    name = "predict"

    def execute(
        self,
        checkpoint: str,
        image: str,
        out: str,
        tile_size: Optional[int] = None,
        batch_size: int = 32,
        probabilities: bool = False,
        verbose: bool = False,
    ) -> int:
        try:
            self.validator.require_paths(image=image)
            setup_logging(self.console, verbose)
            model, manifest, stats = self._load(checkpoint)
            size = tile_size or manifest.metadata.get("tile_size")
            if size is None:
                raise CLIRuntimeError("Tile size unknown; pass --tile-size")
            model.spec.check_tile_size(size)

            raster = load_raster(image)
            tiles = tile(raster, None, size)
            if tiles:
                dataset = apply_standardization(TileDataset(tiles), stats)
                predictions = predict_tiles(model, dataset.images(), batch_size)
                if not probabilities:
                    predictions = (predictions >= 0.5).astype(np.float32)
            else:
                self.error_handler.show_warning("No complete tiles in the raster; output is all nodata")
                predictions = np.empty((0, 1, size, size), dtype=np.float32)
            stitched = stitch(predictions, tiles, raster.height, raster.width, fill=-1.0)
            header = save_raster(out, Raster(values=stitched, nodata=-1.0))
            return self._success(header)
        except Exception as e:
            return self._fail(e, verbose)


class BenchmarkCommand(BaseCommand):
    """Handle the benchmark command: batch vs mode normalization over several seeds."""

    name = "benchmark"

    def execute(
        self,
        config_file: Optional[str] = None,
        profile: Optional[str] = None,
        overrides: Optional[Dict[str, Any]] = None,
        archs: Optional[List[str]] = None,
        seeds: Optional[List[int]] = None,
        out: Optional[str] = None,
        verbose: bool = False,
    ) -> int:
        try:
            config = self._prepare_config(config_file, profile, overrides or {})
            run = self._open_run(config, "normalizations", out, verbose)
            dataset = load_tiles(config.data)
            splits = prepare_stratified(dataset, config.data)
            write_split(run.artifact("split"), splits.plan, {"standardization": splits.stats.model_dump()})

            rows, reports, curves = [], {}, []
            for arch in archs or [config.model.arch]:
                spec = dataclasses.replace(config.model, arch=arch)
                comparison = compare_normalizations(
                    spec, splits, seeds or [0, 1, 2, 3, 4], config.train, config.optimizer, config.loss
                )
                if not comparison.speedup:
                    raise CLIRuntimeError(f"Every {arch} run failed for at least one normalization")
                rows.extend(comparison.speedup)
                reports.update(comparison.test_metrics)
                curves.extend(records[0] for records in comparison.records.values() if records)

            write_speedup(run.artifact("speedup"), rows)
            write_test_metrics(run.artifact("test_metrics"), reports)
            write_loss_curves(run.artifact("loss_curve"), curves)
            self.output_formatter.show_speedup(rows)
            self.output_formatter.show_metrics(reports)
            return self._success(run.path)
        except Exception as e:
            return self._fail(e, verbose)


class VersionCommand:
    """Handle the version command."""

    def __init__(self, console: Console):
        self.console = console

    def execute(self) -> int:
        try:
            from .. import __author__, __version__

            self.console.print(f"modeseg v{__version__}")
            self.console.print(f"Author: {__author__}")
            self.console.print(f"Python: {platform.python_version()} | numpy: {np.__version__}")
            return EXIT_OK
        except Exception as e:
            self.console.print(f"❌ Error getting version info: {e}", style="red")
            return 1


class ConfigCommand(BaseCommand):
    """Handle configuration management commands."""

    name = "config_init"

    def show_config(self, config_file: Optional[str] = None, profile: Optional[str] = None) -> int:
        try:
            config = self._prepare_config(config_file, profile, {})
            self.output_formatter.show_config(config)
            return EXIT_OK
        except Exception as e:
            return self.error_handler.handle_error(e, "config show")

    def init_config(self, profile: Optional[str] = None, out: Optional[str] = None) -> int:
        try:
            manager = ConfigManager()
            config = manager.load_config(profile)
            target = manager.save_config(config, out)
            return self._success(target)
        except Exception as e:
            return self.error_handler.handle_error(e, "config init")
