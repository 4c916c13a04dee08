"""
Unit tests for run configuration and process settings.
"""

import pytest

from app.core.config import Settings
from app.core.exceptions import ConfigNotFoundError, ConfigurationError
from app.core.run_config import load_run_config, parse_run_config
from app.schemas import RunConfig

pytestmark = pytest.mark.unit


class TestRunConfig:
    """Test cases for loading and validating run configs."""

    def test_tiny_config_loads(self, tiny_config_path):
        """Test the bundled desk-scale config parses and keeps its text."""
        config, text = load_run_config(tiny_config_path)

        assert config.seed == 3
        assert config.scenario.num_uavs == 2
        assert config.channel.uav_array.n_x == 2
        assert text == tiny_config_path.read_text()

    def test_empty_file_gives_defaults(self):
        """Test an empty document is the default configuration."""
        assert parse_run_config("") == RunConfig()

    def test_unknown_key_is_named(self):
        """Test a misspelt key fails with its dotted location."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_run_config("[scenario]\nbogus = 1\n", "run.toml")

        assert "scenario.bogus" in exc_info.value.detail
        assert exc_info.value.exit_code == 2

    def test_missing_file(self, tmp_path):
        """Test a missing config maps to exit code 2."""
        with pytest.raises(ConfigNotFoundError) as exc_info:
            load_run_config(tmp_path / "absent.toml")

        assert exc_info.value.exit_code == 2

    def test_invalid_toml(self):
        """Test a syntax error is a configuration error."""
        with pytest.raises(ConfigurationError):
            parse_run_config("seed = = 1")

    def test_input_frames_within_sequence(self):
        """Test the input window cannot exceed the sequence."""
        with pytest.raises(ConfigurationError):
            parse_run_config("[scenario]\nframes_per_sequence = 3\ninput_frames = 4\n")

    @pytest.mark.parametrize("extent", ["[0.0, 100.0]", "[100.0, -5.0]"])
    def test_area_extent_must_be_positive(self, extent):
        """Test a degenerate scene area is a configuration error (exit 2)."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_run_config(f"[scenario]\narea_extent = {extent}\n", "run.toml")

        assert "scenario" in exc_info.value.detail
        assert exc_info.value.exit_code == 2

    def test_kappa_grid_above_one(self):
        """Test a kappa grid reaching past 1 is rejected."""
        with pytest.raises(ConfigurationError):
            parse_run_config("[kappa]\nkappa_min = 0.5\nstep = 0.3\ncount = 3\n")

    def test_with_overrides(self, tiny_config):
        """Test CLI overrides replace seed and output directory only."""
        updated = tiny_config.with_overrides(seed=11, output_dir="elsewhere")

        assert (updated.seed, updated.output_dir) == (11, "elsewhere")
        assert updated.scenario == tiny_config.scenario
        assert tiny_config.with_overrides() == tiny_config

    def test_sequences_get_distinct_seeds(self, tiny_config):
        """Test each sequence draws its scene from its own seed."""
        seeds = {tiny_config.scenario_for(s).rng_seed for s in range(4)}

        assert len(seeds) == 4


class TestSettings:
    """Test cases for environment-driven settings."""

    def test_defaults(self, monkeypatch):
        """Test settings defaults without environment overrides."""
        monkeypatch.delenv("RUNS_DIR", raising=False)
        monkeypatch.delenv("SIM_WORKERS", raising=False)

        settings = Settings(_env_file=None)

        assert settings.RUNS_DIR == "runs"
        assert settings.SIM_WORKERS == 1
        assert settings.version_string == "v1.0.0-sim"

    def test_environment_overrides(self, monkeypatch):
        """Test environment variables override the defaults."""
        monkeypatch.setenv("RUNS_DIR", "/tmp/sim-runs")
        monkeypatch.setenv("SIM_WORKERS", "3")
        monkeypatch.setenv("LOG_FORMAT", "console")

        settings = Settings(_env_file=None)

        assert settings.RUNS_DIR == "/tmp/sim-runs"
        assert settings.SIM_WORKERS == 3
        assert settings.LOG_FORMAT == "console"
