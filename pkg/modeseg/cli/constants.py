"""CLI constants: artifact names, defaults and user-facing message templates."""

# Exit codes
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# Files and logging
DEFAULT_LOG_FILE = "modeseg.log"
DEFAULT_CONFIG_FILE = "modeseg.config.json"
RUN_ROOT_ENV = "MODESEG_RUN_ROOT"

ARTIFACTS = {
    "config": "config.json",
    "record": "record.jsonl",
    "summary": "summary.json",
    "split": "split.json",
    "loss_curve": "loss_curve.csv",
    "test_metrics": "test_metrics.csv",
    "eval_metrics": "eval_metrics.csv",
    "grid_results": "grid_results.csv",
    "cv_results": "cv_results.csv",
    "speedup": "speedup.csv",
    "log": DEFAULT_LOG_FILE,
}

SCENE_NAME = "scene"
MASK_NAME = "mask.pgm"
SUBSETS = ["all", "train", "val", "test"]

DISPLAY_LIMITS = {"grid_rows": 10, "epoch_rows": 12}

ERROR_RECOVERY_SUGGESTIONS = {
    "configuration": [
        "Run 'modeseg config show' to inspect the resolved configuration",
        "Tile size must be a multiple of 2**depth",
        "Check option values against 'modeseg <command> --help'",
    ],
    "data": [
        "Check that the raster header (.json) and data (.bin) files exist side by side",
        "Generate a synthetic scene with 'modeseg synth'",
    ],
    "training": [
        "Lower the learning rate with --lr",
        "Switch to --optimizer adam",
        "Run with --verbose and inspect modeseg.log in the run directory",
    ],
    "checkpoint": [
        "Pass the run directory that holds model.json and model.bin",
        "Re-train if the checkpoint was written by a different model spec",
    ],
    "output": [
        "Check write permissions for the run directory",
        "Set MODESEG_RUN_ROOT or pass --out to write elsewhere",
    ],
}

SUCCESS_MESSAGES = {
    "synth": "✅ Scene written to {path}",
    "train": "✅ Training finished; artifacts in {path}",
    "gridsearch": "✅ Grid search finished; results in {path}",
    "crossval": "✅ Cross-validation finished; results in {path}",
    "evaluate": "✅ Metrics written to {path}",
    "predict": "✅ Mask written to {path}",
    "benchmark": "✅ Benchmark finished; results in {path}",
    "config_init": "✅ Configuration written to {path}",
}

ERROR_TEMPLATES = {
    "missing_path": "{name} path not found: {path}",
    "invalid_list": "Could not parse {name}: {value}",
    "unexpected_error": "❌ Unexpected error: {error}",
}
