"""CLI-specific exceptions."""

from .constants import EXIT_RUNTIME, EXIT_USAGE


class CLIError(Exception):
    """Base exception for CLI errors."""

    def __init__(self, message: str, exit_code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code


class CLIValidationError(CLIError):
    """Raised when command-line input is malformed."""

    def __init__(self, message: str):
        super().__init__(message, exit_code=EXIT_USAGE)


class CLIConfigurationError(CLIError):
    """Raised when the configuration document cannot be read or resolved."""

    def __init__(self, message: str):
        super().__init__(message, exit_code=EXIT_USAGE)


class CLIRuntimeError(CLIError):
    """Raised when a command fails while running (missing data, divergence, no result)."""

    pass


class CLIOutputError(CLIError):
    """Raised when artifacts cannot be written."""

    pass
