"""End-to-end command tests."""
