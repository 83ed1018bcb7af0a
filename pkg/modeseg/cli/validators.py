"""Input validation utilities for CLI."""

from pathlib import Path
from typing import Callable, List, Optional, Tuple, TypeVar

from .constants import ERROR_TEMPLATES, SUBSETS
from .exceptions import CLIRuntimeError, CLIValidationError

T = TypeVar("T")


def parse_list(value: Optional[str], cast: Callable[[str], T], name: str) -> Optional[List[T]]:
    """Split a comma-separated option into typed items; None passes through."""
    if value is None:
        return None
    try:
        items = [cast(part.strip()) for part in value.split(",") if part.strip()]
    except ValueError:
        raise CLIValidationError(ERROR_TEMPLATES["invalid_list"].format(name=name, value=value))
    if not items:
        raise CLIValidationError(ERROR_TEMPLATES["invalid_list"].format(name=name, value=value))
    return items


def validate_existing(path: Optional[str], name: str) -> Tuple[bool, Optional[str]]:
    """A raster may be given by its stem, so the .json header also counts."""
    if path is None:
        return True, None
    candidate = Path(path)
    if candidate.exists() or candidate.with_name(candidate.name + ".json").exists():
        return True, None
    return False, ERROR_TEMPLATES["missing_path"].format(name=name, path=path)


class InputValidator:
    """Centralized input validation for CLI commands."""

    @staticmethod
    def require_paths(**paths: Optional[str]) -> None:
        """Fail with a runtime error naming the first input path that does not exist."""
        for name, path in paths.items():
            ok, error = validate_existing(path, name)
            if not ok:
                raise CLIRuntimeError(error)

    @staticmethod
    def validate_data_pair(image: Optional[str], mask: Optional[str]) -> None:
        if (image is None) != (mask is None):
            raise CLIValidationError("--image and --mask must be given together")

    @staticmethod
    def validate_subset(subset: str) -> None:
        if subset not in SUBSETS:
            raise CLIValidationError(f"--subset must be one of: {', '.join(SUBSETS)}")

    @staticmethod
    def validate_checkpoint_dir(path: str) -> None:
        directory = Path(path)
        if not (directory / "model.json").exists():
            raise CLIRuntimeError(f"No checkpoint manifest found in {directory}")
