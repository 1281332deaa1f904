"""Tests for the `avgmart` package."""
