"""Unit tests for the simulator services."""
