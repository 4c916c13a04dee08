"""Simulator test suite."""
