"""Run-directory persistence package."""
