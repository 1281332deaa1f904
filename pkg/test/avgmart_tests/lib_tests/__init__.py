"""Tests for the `avgmart.lib` package."""
