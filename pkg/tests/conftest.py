"""
Test configuration and fixtures.
Provides the desk-scale run config, scenarios and environments shared by the suites.
"""

from pathlib import Path

import numpy as np
import pytest

from app.core.run_config import load_run_config
from app.models import BevSpec, CameraIntrinsics
from app.schemas import CameraConfig, RunConfig, ScenarioConfig, VehicleSeed
from app.services import link_service, scenario_service
from app.services.experiment_service import build_environment

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
TINY_CONFIG = CONFIG_DIR / "tiny.toml"
DEFAULT_CONFIG = CONFIG_DIR / "default.toml"


@pytest.fixture(scope="session")
def tiny_config_path() -> Path:
    return TINY_CONFIG


@pytest.fixture(scope="session")
def tiny_config() -> RunConfig:
    """Two UAVs, three kappa levels, 16-entry codebook."""
    config, _ = load_run_config(TINY_CONFIG)
    return config


@pytest.fixture(scope="session")
def default_config() -> RunConfig:
    config, _ = load_run_config(DEFAULT_CONFIG)
    return config


@pytest.fixture(scope="session")
def tiny_scenario(tiny_config):
    """Sequence 0 of the tiny config."""
    return scenario_service.generate_scenario(tiny_config.scenario_for(0))


@pytest.fixture(scope="session")
def tiny_env(tiny_config):
    return build_environment(tiny_config, 0)


@pytest.fixture(scope="session")
def tiny_envs(tiny_config):
    return [build_environment(tiny_config, s) for s in range(tiny_config.num_sequences)]


@pytest.fixture(scope="session")
def tiny_codebook(tiny_config):
    array = tiny_config.channel.uav_array
    return link_service.build_codebook(
        array.n_x, array.n_y, tiny_config.link.oversampling_x, tiny_config.link.oversampling_y
    )


@pytest.fixture
def nadir_scenario_config() -> ScenarioConfig:
    """One nadir camera straight above the centre and two parked vehicles."""
    return ScenarioConfig(
        num_uavs=1,
        uav_offset=0.0,
        num_vehicles=2,
        fixed_vehicles=(
            VehicleSeed(center=(0.0, 0.0)),
            VehicleSeed(center=(10.0, -6.0), axis="y"),
        ),
        frames_per_sequence=3,
        input_frames=1,
        camera=CameraConfig(image_height=41, image_width=41, aim="nadir"),
        rng_seed=11,
    )


@pytest.fixture
def nadir_scenario(nadir_scenario_config):
    return scenario_service.generate_scenario(nadir_scenario_config)


@pytest.fixture
def small_intrinsics() -> CameraIntrinsics:
    """f = 100 px with the principal point on pixel (2, 2) of a 5 x 5 image."""
    return CameraIntrinsics(100.0, 100.0, 2.0, 2.0)


@pytest.fixture
def full_bev() -> BevSpec:
    return BevSpec(-50.0, 50.0, -50.0, 50.0, 0.5, 0.5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
