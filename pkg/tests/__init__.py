"""Tests for meshvpon package."""
