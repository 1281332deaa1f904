"""Tests for the `avgmart.cli` package."""
