"""Tests for modeseg."""
