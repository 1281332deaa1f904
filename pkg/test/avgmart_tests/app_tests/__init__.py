"""Tests for the `avgmart.app` package."""
