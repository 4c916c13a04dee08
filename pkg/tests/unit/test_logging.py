"""
Unit tests for structured logging setup.
"""

import json
import logging

import pytest
import structlog

from app.core import logging as sim_logging
from app.core.config import Settings

pytestmark = pytest.mark.unit


@pytest.fixture
def restore_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
    structlog.contextvars.clear_contextvars()
    structlog.reset_defaults()


class TestRunContext:
    """Test cases for bind_run_context."""

    def test_context_is_merged_into_events(self, restore_logging):
        """Test the bound run id and seed reach every event."""
        sim_logging.bind_run_context("simulate", "simulate-3-abcdef12", 3)

        event = structlog.contextvars.merge_contextvars(None, "info", {"event": "step"})

        assert event == {
            "event": "step",
            "command": "simulate",
            "run_id": "simulate-3-abcdef12",
            "seed": 3,
        }

    def test_rebinding_replaces_the_previous_run(self, restore_logging):
        """Test a second run does not inherit the first run's id."""
        sim_logging.bind_run_context("simulate", "first", 1)
        sim_logging.bind_run_context("sweep-kappa", "second", 2)

        context = structlog.contextvars.get_contextvars()

        assert context == {"command": "sweep-kappa", "run_id": "second", "seed": 2}


class TestSetupLogging:
    """Test cases for setup_logging."""

    def test_json_lines_on_stderr(self, monkeypatch, capsys, restore_logging):
        """Test JSON output carries the app stamp and the run context, and stays off stdout."""
        settings = Settings(_env_file=None, LOG_FORMAT="json", LOG_LEVEL="INFO")
        monkeypatch.setattr(sim_logging, "get_settings", lambda: settings)
        sim_logging.setup_logging()
        sim_logging.bind_run_context("train", "train-7-0badc0de", 7)

        structlog.get_logger("uavsim.test").info("Epoch finished", epoch=4)

        captured = capsys.readouterr()
        line = json.loads(captured.err.strip().splitlines()[-1])
        assert captured.out == ""
        assert line["event"] == "Epoch finished"
        assert line["epoch"] == 4
        assert line["run_id"] == "train-7-0badc0de"
        assert line["service"] == settings.APP_NAME

    def test_level_override_filters_info(self, monkeypatch, capsys, restore_logging):
        """Test an explicit level beats LOG_LEVEL."""
        settings = Settings(_env_file=None, LOG_FORMAT="json", LOG_LEVEL="DEBUG")
        monkeypatch.setattr(sim_logging, "get_settings", lambda: settings)
        sim_logging.setup_logging("warning")

        structlog.get_logger("uavsim.test").info("hidden")
        structlog.get_logger("uavsim.test").warning("shown")

        err = capsys.readouterr().err
        assert "hidden" not in err
        assert "shown" in err
