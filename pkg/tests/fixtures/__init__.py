"""Test fixtures for meshvpon tests."""
