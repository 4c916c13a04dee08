"""Core settings, logging, errors, metrics and seeding."""
