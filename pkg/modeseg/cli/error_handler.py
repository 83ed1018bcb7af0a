"""Error reporting for CLI commands: rich panels and exit-code mapping."""

import logging
import traceback
from typing import List, Optional

from rich.console import Console
from rich.panel import Panel

from ..core.exceptions import (
    CheckpointError,
    ConfigurationError,
    DataError,
    DataFormatError,
    ModeSegError,
    NumericalError,
    TrainingError,
)
from .constants import ERROR_RECOVERY_SUGGESTIONS, ERROR_TEMPLATES, EXIT_RUNTIME, EXIT_USAGE
from .exceptions import CLIConfigurationError, CLIError, CLIOutputError, CLIValidationError

logger = logging.getLogger(__name__)


class ErrorHandler:
    """Centralized error handling and recovery suggestions."""

    def __init__(self, console: Console, verbose: bool = False):
        self.console = console
        self.verbose = verbose

    def handle_error(self, error: Exception, context: Optional[str] = None) -> int:
        """Report ``error`` and return the exit code for it."""
        if isinstance(error, CLIError):
            return self._handle_cli_error(error, context)
        if isinstance(error, ModeSegError):
            return self._handle_library_error(error, context)
        if isinstance(error, KeyboardInterrupt):
            self.console.print("\n⚠️ Operation cancelled by user", style="yellow")
            return EXIT_RUNTIME
        return self._handle_unexpected_error(error, context)

    def _handle_cli_error(self, error: CLIError, context: Optional[str]) -> int:
        self.console.print(f"\n❌ {error.message}", style="bold red")
        self._show_recovery_suggestions(self._suggestions_for(error), context)
        if self.verbose:
            self._show_traceback(error)
        return error.exit_code

    def _handle_library_error(self, error: ModeSegError, context: Optional[str]) -> int:
        self.console.print(f"\n❌ {error.message}", style="bold red")
        if error.context:
            details = ", ".join(f"{k}={v}" for k, v in error.context.items())
            self.console.print(f"   {details}", style="dim")
        suggestions = list(error.suggestions) or self._suggestions_for(error)
        self._show_recovery_suggestions(suggestions, context)
        if self.verbose:
            self._show_traceback(error)
        return EXIT_USAGE if isinstance(error, ConfigurationError) else EXIT_RUNTIME

    def _handle_unexpected_error(self, error: Exception, context: Optional[str]) -> int:
        logger.exception(f"Unexpected error in {context}")
        self.console.print(
            f"\n{ERROR_TEMPLATES['unexpected_error'].format(error=error)}", style="bold red"
        )
        if self.verbose:
            self._show_traceback(error)
        else:
            self.console.print("💡 Run with --verbose for detailed error information", style="dim")
        return EXIT_RUNTIME

    def _suggestions_for(self, error: Exception) -> List[str]:
        if isinstance(error, (ConfigurationError, CLIConfigurationError, CLIValidationError)):
            kind = "configuration"
        elif isinstance(error, (DataError, DataFormatError)):
            kind = "data"
        elif isinstance(error, (TrainingError, NumericalError)):
            kind = "training"
        elif isinstance(error, CheckpointError):
            kind = "checkpoint"
        elif isinstance(error, CLIOutputError):
            kind = "output"
        else:
            return []
        return ERROR_RECOVERY_SUGGESTIONS[kind]

    def _show_recovery_suggestions(self, suggestions: List[str], context: Optional[str] = None):
        if not suggestions:
            return
        title = "💡 Suggested Solutions"
        if context:
            title += f" ({context})"
        text = "\n".join(f"  • {s}" for s in suggestions)
        self.console.print(Panel(text, title=title, border_style="yellow", padding=(1, 2)))

    def _show_traceback(self, error: BaseException):
        text = "".join(traceback.format_exception(type(error), error, error.__traceback__))
        self.console.print(
            Panel(text, title="🔍 Detailed Error Information", border_style="red", padding=(1, 2))
        )

    def show_warning(self, message: str, suggestions: Optional[List[str]] = None):
        self.console.print(f"⚠️ {message}", style="yellow")
        if suggestions:
            self._show_recovery_suggestions(suggestions, "Warning")
