"""Command-line surface package."""
