"""Exception hierarchy for modeseg with actionable error messages."""

import logging
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

logger = logging.getLogger(__name__)


class ModeSegError(Exception):
    """
    Base exception for the modeseg package with structured error context.

    Carries a machine-readable error code, a context mapping (shapes, paths, layer
    names), actionable suggestions and a recoverability flag.
    """

    def __init__(
        self,
        message: str,
        *,
        error_code: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
        suggestions: Optional[List[str]] = None,
        recoverable: bool = True,
        original_error: Optional[Exception] = None,
    ):
        """
        Initialize a modeseg exception.

        Args:
            message: Human-readable error description
            error_code: Unique error identifier for programmatic handling
            context: Additional context information (shapes, paths, layer, ...)
            suggestions: List of actionable suggestions for fixing the error
            recoverable: Whether this error can potentially be recovered from
            original_error: Original exception that caused this error (for chaining)
        """
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.context = context or {}
        self.suggestions = suggestions or []
        self.recoverable = recoverable
        self.original_error = original_error
        self.timestamp = datetime.now().isoformat()

        super().__init__(self._build_full_message())
        self._log_error()

    def _build_full_message(self) -> str:
        """Build the composite message with context and suggestions."""
        parts = [self.message]

        if self.context:
            context_str = ", ".join(f"{k}={v}" for k, v in self.context.items())
            parts.append(f"Context: {context_str}")

        if self.suggestions:
            parts.append(f"Suggestions: {'; '.join(self.suggestions)}")

        if self.error_code:
            parts.append(f"Error Code: {self.error_code}")

        return " | ".join(parts)

    def _log_error(self) -> None:
        """Log the error, WARNING when recoverable and ERROR otherwise."""
        log_level = logging.WARNING if self.recoverable else logging.ERROR
        logger.log(
            log_level,
            f"modeseg error: {self.message} | Context: {self.context} | Code: {self.error_code}",
        )

    def __str__(self) -> str:
        return self._build_full_message()

    def add_context(self, key: str, value: Any) -> "ModeSegError":
        """Add context information to the error."""
        self.context[key] = value
        return self

    def add_suggestion(self, suggestion: str) -> "ModeSegError":
        """Add an actionable suggestion to the error."""
        self.suggestions.append(suggestion)
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to dictionary for serialization."""
        return {
            "error_type": self.__class__.__name__,
            "error_code": self.error_code,
            "message": self.message,
            "context": self.context,
            "suggestions": self.suggestions,
            "recoverable": self.recoverable,
            "timestamp": self.timestamp,
            "original_error": str(self.original_error) if self.original_error else None,
        }


class DimensionError(ModeSegError):
    """Raised when tensor shapes violate an operation's contract."""

    def __init__(
        self,
        message: str,
        *,
        op: Optional[str] = None,
        shapes: Optional[Dict[str, Sequence[int]]] = None,
        **kwargs,
    ):
        context = kwargs.pop("context", {})
        if op:
            context["op"] = op
        if shapes:
            for key, shape in shapes.items():
                context[key] = tuple(int(s) for s in shape)

        suggestions = kwargs.pop("suggestions", [])
        if not suggestions:
            suggestions = [
                "Check the batch-channel-height-width layout of every input",
                "Make tile sizes divisible by 2**depth of the model",
            ]

        super().__init__(message, context=context, suggestions=suggestions, **kwargs)


class ContractError(ModeSegError):
    """Raised when a caller breaks an operation's pre-condition."""

    def __init__(self, message: str, *, op: Optional[str] = None, **kwargs):
        context = kwargs.pop("context", {})
        if op:
            context["op"] = op
        super().__init__(message, context=context, recoverable=False, **kwargs)


class NumericalError(ModeSegError):
    """Raised when an operation produces NaN or Inf from finite inputs."""

    def __init__(
        self,
        message: str,
        *,
        op: Optional[str] = None,
        layer: Optional[str] = None,
        **kwargs,
    ):
        context = kwargs.pop("context", {})
        if op:
            context["op"] = op
        if layer:
            context["layer"] = layer

        suggestions = kwargs.pop("suggestions", [])
        if not suggestions:
            suggestions = [
                "Lower the learning rate",
                "Check that input tiles were standardized",
                "Increase the normalization epsilon",
            ]

        super().__init__(
            message, context=context, suggestions=suggestions, recoverable=False, **kwargs
        )

    @property
    def layer(self) -> Optional[str]:
        return self.context.get("layer")


class ConfigurationError(ModeSegError):
    """Raised when configuration is invalid."""

    def __init__(
        self,
        message: str,
        *,
        config_field: Optional[str] = None,
        expected: Optional[str] = None,
        provided_value: Optional[Any] = None,
        **kwargs,
    ):
        context = kwargs.pop("context", {})
        if config_field:
            context["config_field"] = config_field
        if expected:
            context["expected"] = expected
        if provided_value is not None:
            context["provided_value"] = str(provided_value)

        suggestions = kwargs.pop("suggestions", [])
        if not suggestions:
            suggestions = self._get_config_suggestions(config_field, expected)

        super().__init__(message, context=context, suggestions=suggestions, **kwargs)

    def _get_config_suggestions(
        self, config_field: Optional[str], expected: Optional[str]
    ) -> List[str]:
        """Get specific suggestions for configuration errors."""
        suggestions = []

        if config_field:
            suggestions.append(f"Check the '{config_field}' configuration field")

        if expected:
            suggestions.append(f"Expected {expected}")

        suggestions.extend(
            [
                "Use ConfigBuilder or ConfigProfiles for guided configuration",
                "Run 'modeseg config show' to inspect the resolved configuration",
            ]
        )

        return suggestions


class DataFormatError(ModeSegError):
    """Raised when a raster or mask file does not match its header."""

    def __init__(
        self,
        message: str,
        *,
        path: Optional[str] = None,
        expected_bytes: Optional[int] = None,
        actual_bytes: Optional[int] = None,
        **kwargs,
    ):
        context = kwargs.pop("context", {})
        if path:
            context["path"] = path
        if expected_bytes is not None:
            context["expected_bytes"] = expected_bytes
        if actual_bytes is not None:
            context["actual_bytes"] = actual_bytes

        suggestions = kwargs.pop("suggestions", [])
        if not suggestions:
            suggestions = [
                "Rasters are a JSON header plus a flat little-endian float32 file",
                "Check that width*height*4 equals the binary file size",
            ]

        super().__init__(message, context=context, suggestions=suggestions, **kwargs)


class DataError(ModeSegError):
    """Raised when data content is unusable (non-finite pixels, zero spread, ...)."""

    def __init__(self, message: str, *, path: Optional[str] = None, **kwargs):
        context = kwargs.pop("context", {})
        if path:
            context["path"] = path
        super().__init__(message, context=context, **kwargs)


class CheckpointError(ModeSegError):
    """Raised when a checkpoint cannot be read or does not match its model spec."""

    def __init__(
        self,
        message: str,
        *,
        path: Optional[str] = None,
        parameter: Optional[str] = None,
        **kwargs,
    ):
        context = kwargs.pop("context", {})
        if path:
            context["path"] = path
        if parameter:
            context["parameter"] = parameter

        suggestions = kwargs.pop("suggestions", [])
        if not suggestions:
            suggestions = [
                "Rebuild the model from the spec stored in the checkpoint manifest",
                "Check that the checkpoint was written by a compatible modeseg version",
            ]

        super().__init__(message, context=context, suggestions=suggestions, **kwargs)


class TrainingError(ModeSegError):
    """Raised when a training run diverges; carries the partial run record."""

    def __init__(
        self,
        message: str,
        *,
        epoch: Optional[int] = None,
        record: Optional[Any] = None,
        **kwargs,
    ):
        context = kwargs.pop("context", {})
        if epoch is not None:
            context["epoch"] = epoch
        self.record = record

        suggestions = kwargs.pop("suggestions", [])
        if not suggestions:
            suggestions = [
                "Lower the learning rate",
                "Try the Adam optimizer",
                "Check the loss configuration",
            ]

        super().__init__(
            message, context=context, suggestions=suggestions, recoverable=False, **kwargs
        )
