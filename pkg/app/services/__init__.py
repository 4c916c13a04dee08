"""Simulation services package."""
