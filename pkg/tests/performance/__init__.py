"""Timing and acceptance-scale tests."""
