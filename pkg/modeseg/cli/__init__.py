"""Command-line interface for modeseg."""

from .main import app, console, main

__all__ = ["app", "main", "console"]
