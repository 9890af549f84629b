"""Tests for real estate deal platform."""
