"""Main CLI application with modular structure."""

from typing import Optional

import typer
from rich.console import Console

from .commands import (
    BenchmarkCommand,
    ConfigCommand,
    CrossValCommand,
    EvaluateCommand,
    GridSearchCommand,
    PredictCommand,
    SynthCommand,
    TrainCommand,
    VersionCommand,
)
from .exceptions import CLIValidationError
from .validators import parse_list

# Create the main app
app = typer.Typer(
    name="modeseg",
    help="Water segmentation of SAR backscatter with batch- or mode-normalized U-Net and SegNet",
    add_completion=False,
    rich_markup_mode="rich",
)

# Create console instance
console = Console()

# Options shared by every experiment command
CONFIG_OPT = typer.Option(None, "--config", "-c", help="JSON configuration document")
PROFILE_OPT = typer.Option(None, "--profile", "-p", help="Named configuration profile (see 'config show')")
ARCH_OPT = typer.Option(None, "--arch", help="Architecture: unet or segnet")
NORM_OPT = typer.Option(None, "--norm", help="Normalization: none, batch or mode")
MODES_OPT = typer.Option(None, "--modes", help="Number of mixture modes for --norm mode")
DEPTH_OPT = typer.Option(None, "--depth", help="Encoder levels (tile size must be a multiple of 2**depth)")
BASE_OPT = typer.Option(None, "--base-channels", help="Channels of the first encoder level")
OPTIMIZER_OPT = typer.Option(None, "--optimizer", help="Optimizer: adam or sgd")
LR_OPT = typer.Option(None, "--lr", help="Learning rate")
LOSS_OPT = typer.Option(None, "--loss", help="Loss: dice, focal or combined")
DROPOUT_OPT = typer.Option(None, "--dropout", help="Dropout rate in [0, 1)")
TILE_OPT = typer.Option(None, "--tile-size", help="Tile edge length in pixels")
BATCH_OPT = typer.Option(None, "--batch-size", help="Mini-batch size")
EPOCHS_OPT = typer.Option(None, "--epochs", help="Maximum training epochs")
PATIENCE_OPT = typer.Option(None, "--patience", help="Early-stopping patience in epochs")
SEED_OPT = typer.Option(None, "--seed", help="Seed for initialization, shuffling, splits and synthesis")
IMAGE_OPT = typer.Option(None, "--image", help="Backscatter raster (header .json or stem)")
MASK_OPT = typer.Option(None, "--mask", help="Water mask (.pgm or raster)")
WIDTH_OPT = typer.Option(None, "--width", help="Synthetic scene width when no --image is given")
HEIGHT_OPT = typer.Option(None, "--height", help="Synthetic scene height when no --image is given")
COVERAGE_OPT = typer.Option(None, "--coverage", help="Synthetic water coverage in [0, 1]")
WORKERS_OPT = typer.Option(None, "--workers", help="Parallel independent runs (gridsearch, crossval)")
OUT_OPT = typer.Option(None, "--out", "-o", help="Run directory (default: $MODESEG_RUN_ROOT/<command>-<model>-<time>)")
VERBOSE_OPT = typer.Option(False, "--verbose", "-v", help="Verbose output")


def _overrides(**values) -> dict:
    return values


def _list_option(value: Optional[str], cast, name: str):
    try:
        return parse_list(value, cast, name)
    except CLIValidationError as e:
        console.print(f"❌ {e.message}", style="bold red")
        raise typer.Exit(2)


@app.command()
def synth(
    out: str = typer.Option("data", "--out", "-o", help="Output directory for scene.json/.bin and mask.pgm"),
    width: int = typer.Option(512, "--width", help="Scene width in pixels"),
    height: int = typer.Option(512, "--height", help="Scene height in pixels"),
    coverage: float = typer.Option(0.35, "--coverage", help="Water coverage in [0, 1]"),
    seed: int = typer.Option(0, "--seed", help="Random seed"),
    looks: int = typer.Option(0, "--looks", help="Speckle looks (0 disables speckle)"),
    nodata_margin: int = typer.Option(0, "--nodata-margin", help="Width of slanted no-data swath edges"),
    verbose: bool = VERBOSE_OPT,
):
    """Generate a synthetic bimodal backscatter scene and its water mask.

    Examples:
        $ modeseg synth --width 512 --height 512 --coverage 0.4 --seed 7 --out data
    """
    command = SynthCommand(console)
    raise typer.Exit(command.execute(out, width, height, coverage, seed, looks, nodata_margin, verbose))


@app.command()
def train(
    config: Optional[str] = CONFIG_OPT,
    profile: Optional[str] = PROFILE_OPT,
    arch: Optional[str] = ARCH_OPT,
    norm: Optional[str] = NORM_OPT,
    modes: Optional[int] = MODES_OPT,
    depth: Optional[int] = DEPTH_OPT,
    base_channels: Optional[int] = BASE_OPT,
    optimizer: Optional[str] = OPTIMIZER_OPT,
    lr: Optional[float] = LR_OPT,
    loss: Optional[str] = LOSS_OPT,
    dropout: Optional[float] = DROPOUT_OPT,
    tile_size: Optional[int] = TILE_OPT,
    batch_size: Optional[int] = BATCH_OPT,
    epochs: Optional[int] = EPOCHS_OPT,
    patience: Optional[int] = PATIENCE_OPT,
    seed: Optional[int] = SEED_OPT,
    image: Optional[str] = IMAGE_OPT,
    mask: Optional[str] = MASK_OPT,
    width: Optional[int] = WIDTH_OPT,
    height: Optional[int] = HEIGHT_OPT,
    coverage: Optional[float] = COVERAGE_OPT,
    out: Optional[str] = OUT_OPT,
    verbose: bool = VERBOSE_OPT,
):
    """Train one model on a stratified 70/10/20 split.

    Writes config.json, split.json, model.json/.bin, record.jsonl, loss_curve.csv,
    summary.json, test_metrics.csv and modeseg.log into the run directory.

    Examples:
        $ modeseg train --profile unet_mode_desk
        $ modeseg train --image data/scene --mask data/mask.pgm --norm mode --modes 2
    """
    overrides = _overrides(
        arch=arch, norm=norm, modes=modes, depth=depth, base_channels=base_channels,
        optimizer=optimizer, lr=lr, loss=loss, dropout=dropout, tile_size=tile_size,
        batch_size=batch_size, epochs=epochs, patience=patience, seed=seed, image=image,
        mask=mask, width=width, height=height, coverage=coverage,
    )
    command = TrainCommand(console)
    raise typer.Exit(command.execute(config, profile, overrides, out, verbose))


@app.command()
def gridsearch(
    config: Optional[str] = CONFIG_OPT,
    profile: Optional[str] = PROFILE_OPT,
    arch: Optional[str] = ARCH_OPT,
    norm: Optional[str] = NORM_OPT,
    modes: Optional[int] = MODES_OPT,
    tile_size: Optional[int] = TILE_OPT,
    batch_size: Optional[int] = BATCH_OPT,
    epochs: Optional[int] = EPOCHS_OPT,
    patience: Optional[int] = PATIENCE_OPT,
    seed: Optional[int] = SEED_OPT,
    image: Optional[str] = IMAGE_OPT,
    mask: Optional[str] = MASK_OPT,
    optimizers: Optional[str] = typer.Option(None, "--optimizers", help="Comma list, e.g. adam,sgd"),
    learning_rates: Optional[str] = typer.Option(None, "--learning-rates", help="Comma list, e.g. 1e-4,1e-3,1e-2"),
    dropouts: Optional[str] = typer.Option(None, "--dropouts", help="Comma list, e.g. 0,0.1,0.2,0.3,0.5"),
    losses: Optional[str] = typer.Option(None, "--losses", help="Comma list, e.g. dice,focal,combined"),
    workers: Optional[int] = WORKERS_OPT,
    out: Optional[str] = OUT_OPT,
    verbose: bool = VERBOSE_OPT,
):
    """Search optimizer x learning rate x dropout x loss (90 points by default).

    Selects the highest validation Dsc, evaluates it on the test split and writes
    grid_results.csv and test_metrics.csv.
    """
    overrides = _overrides(
        arch=arch, norm=norm, modes=modes, tile_size=tile_size, batch_size=batch_size,
        epochs=epochs, patience=patience, seed=seed, image=image, mask=mask, workers=workers,
    )
    grid_overrides = {
        "optimizers": _list_option(optimizers, str, "--optimizers"),
        "learning_rates": _list_option(learning_rates, float, "--learning-rates"),
        "dropout_rates": _list_option(dropouts, float, "--dropouts"),
        "losses": _list_option(losses, str, "--losses"),
    }
    command = GridSearchCommand(console)
    raise typer.Exit(command.execute(config, profile, overrides, grid_overrides, out, verbose))


@app.command()
def crossval(
    config: Optional[str] = CONFIG_OPT,
    profile: Optional[str] = PROFILE_OPT,
    arch: Optional[str] = ARCH_OPT,
    norm: Optional[str] = NORM_OPT,
    modes: Optional[int] = MODES_OPT,
    optimizer: Optional[str] = OPTIMIZER_OPT,
    lr: Optional[float] = LR_OPT,
    loss: Optional[str] = LOSS_OPT,
    dropout: Optional[float] = DROPOUT_OPT,
    tile_size: Optional[int] = TILE_OPT,
    batch_size: Optional[int] = BATCH_OPT,
    epochs: Optional[int] = EPOCHS_OPT,
    patience: Optional[int] = PATIENCE_OPT,
    seed: Optional[int] = SEED_OPT,
    image: Optional[str] = IMAGE_OPT,
    mask: Optional[str] = MASK_OPT,
    norms: Optional[str] = typer.Option(None, "--norms", help="Comma list of normalizations to compare, e.g. batch,mode"),
    workers: Optional[int] = WORKERS_OPT,
    out: Optional[str] = OUT_OPT,
    verbose: bool = VERBOSE_OPT,
):
    """Four-fold zone cross-validation; writes cv_results.csv (4 zones x 6 metrics, mean, std)."""
    overrides = _overrides(
        arch=arch, norm=norm, modes=modes, optimizer=optimizer, lr=lr, loss=loss,
        dropout=dropout, tile_size=tile_size, batch_size=batch_size, epochs=epochs,
        patience=patience, seed=seed, image=image, mask=mask, workers=workers,
    )
    command = CrossValCommand(console)
    norm_list = _list_option(norms, str, "--norms")
    raise typer.Exit(command.execute(config, profile, overrides, norm_list, out, verbose))


@app.command()
def evaluate(
    checkpoint: str = typer.Argument(..., help="Run directory holding model.json and model.bin"),
    subset: str = typer.Option("all", "--subset", help="Tiles to score: all, train, val or test"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Data configuration (default: the run's config.json)"),
    image: Optional[str] = IMAGE_OPT,
    mask: Optional[str] = MASK_OPT,
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Metrics CSV (default: <checkpoint>/eval_metrics.csv)"),
    verbose: bool = VERBOSE_OPT,
):
    """Score a trained checkpoint on labelled tiles."""
    command = EvaluateCommand(console)
    raise typer.Exit(command.execute(checkpoint, subset, config, _overrides(image=image, mask=mask), out, verbose))


@app.command()
def predict(
    checkpoint: str = typer.Argument(..., help="Run directory holding model.json and model.bin"),
    image: str = typer.Option(..., "--image", help="Backscatter raster to segment"),
    out: str = typer.Option(..., "--out", "-o", help="Output raster stem (writes .json and .bin)"),
    tile_size: Optional[int] = typer.Option(None, "--tile-size", help="Tile size (default: the training tile size)"),
    batch_size: int = typer.Option(32, "--batch-size", help="Inference batch size"),
    probabilities: bool = typer.Option(False, "--probabilities", help="Write water probabilities instead of a 0/1 mask"),
    verbose: bool = VERBOSE_OPT,
):
    """Segment a raster; pixels outside complete tiles are written as nodata (-1)."""
    command = PredictCommand(console)
    raise typer.Exit(command.execute(checkpoint, image, out, tile_size, batch_size, probabilities, verbose))


@app.command()
def benchmark(
    config: Optional[str] = CONFIG_OPT,
    profile: Optional[str] = PROFILE_OPT,
    modes: Optional[int] = MODES_OPT,
    optimizer: Optional[str] = OPTIMIZER_OPT,
    lr: Optional[float] = LR_OPT,
    loss: Optional[str] = LOSS_OPT,
    tile_size: Optional[int] = TILE_OPT,
    batch_size: Optional[int] = BATCH_OPT,
    epochs: Optional[int] = EPOCHS_OPT,
    patience: Optional[int] = PATIENCE_OPT,
    image: Optional[str] = IMAGE_OPT,
    mask: Optional[str] = MASK_OPT,
    width: Optional[int] = WIDTH_OPT,
    height: Optional[int] = HEIGHT_OPT,
    coverage: Optional[float] = COVERAGE_OPT,
    archs: Optional[str] = typer.Option(None, "--archs", help="Comma list of architectures, e.g. unet,segnet"),
    seeds: str = typer.Option("0,1,2,3,4", "--seeds", help="Comma list of training seeds"),
    out: Optional[str] = OUT_OPT,
    verbose: bool = VERBOSE_OPT,
):
    """Compare batch and mode normalization: epochs to early stop, time and speed-up.

    Writes speedup.csv, test_metrics.csv and loss_curve.csv.
    """
    overrides = _overrides(
        modes=modes, optimizer=optimizer, lr=lr, loss=loss, tile_size=tile_size,
        batch_size=batch_size, epochs=epochs, patience=patience, image=image, mask=mask,
        width=width, height=height, coverage=coverage,
    )
    command = BenchmarkCommand(console)
    arch_list = _list_option(archs, str, "--archs")
    seed_list = _list_option(seeds, int, "--seeds")
    raise typer.Exit(command.execute(config, profile, overrides, arch_list, seed_list, out, verbose))


@app.command()
def version():
    """Show version information."""
    command = VersionCommand(console)
    raise typer.Exit(command.execute())


# Create config subcommand group
config_app = typer.Typer(name="config", help="Inspect and write configuration documents", rich_markup_mode="rich")

app.add_typer(config_app, name="config")


@config_app.command("show")
def config_show(
    config: Optional[str] = CONFIG_OPT,
    profile: Optional[str] = PROFILE_OPT,
):
    """Show the resolved configuration (file, profile or environment defaults)."""
    command = ConfigCommand(console)
    raise typer.Exit(command.show_config(config, profile))


@config_app.command("init")
def config_init(
    profile: Optional[str] = PROFILE_OPT,
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Target file (default: modeseg.config.json)"),
):
    """Write a configuration document to edit and pass back with --config."""
    command = ConfigCommand(console)
    raise typer.Exit(command.init_config(profile, out))


def main():
    """Run the main CLI application."""
    app()
