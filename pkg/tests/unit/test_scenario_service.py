"""
Unit tests for scenario service.
Tests scene generation, rendering, ground truth and persistence.
"""

import numpy as np
import pytest

from app.core.exceptions import (
    ArtifactFormatError,
    ConfigurationError,
    RangeError,
    SchemaVersionError,
)
from app.db import storage
from app.schemas import ScenarioConfig
from app.services import perception_service, scenario_service, sparsifier_service
from app.services.scenario_service import SCENARIO_SCHEMA

pytestmark = pytest.mark.unit


class TestScenarioService:
    """Test cases for ScenarioService generation."""

    def test_generation_is_deterministic(self, tiny_config):
        """Test the same config and seed give the same scene."""
        cfg = tiny_config.scenario_for(1)

        first = scenario_service.generate_scenario(cfg)
        second = scenario_service.generate_scenario(cfg)

        for a, b in zip(first.tracks, second.tracks, strict=True):
            np.testing.assert_array_equal(a.centers, b.centers)
            assert a.color == b.color
        np.testing.assert_array_equal(first.texture, second.texture)
        assert all(a.equals(b) for a, b in zip(first.ground_truth, second.ground_truth))

    def test_sequences_differ(self, tiny_config):
        """Test sequences drawn from one root seed are different scenes."""
        a = scenario_service.generate_scenario(tiny_config.scenario_for(0))
        b = scenario_service.generate_scenario(tiny_config.scenario_for(1))

        assert not np.array_equal(a.tracks[0].centers, b.tracks[0].centers)

    def test_default_uav_ring(self):
        """Test four UAVs hover at (+-25, +-25, 50)."""
        scenario = scenario_service.generate_scenario(ScenarioConfig(num_vehicles=4))

        positions = sorted(tuple(np.round(u.position, 9)) for u in scenario.uavs)

        assert positions == [
            (-25.0, -25.0, 50.0),
            (-25.0, 25.0, 50.0),
            (25.0, -25.0, 50.0),
            (25.0, 25.0, 50.0),
        ]

    def test_vehicles_stay_inside_area(self, tiny_scenario):
        """Test every footprint stays within the area at every frame."""
        half = np.array(tiny_scenario.config.area_extent) / 2.0
        for track in tiny_scenario.tracks:
            for frame in range(tiny_scenario.num_frames):
                x0, y0, x1, y1 = track.footprint(frame)
                assert -half[0] <= x0 and x1 <= half[0]
                assert -half[1] <= y0 and y1 <= half[1]

    def test_fixed_vehicles_are_placed_verbatim(self, nadir_scenario):
        """Test explicit vehicle seeds are honoured."""
        np.testing.assert_array_equal(nadir_scenario.tracks[0].centers[0], [0.0, 0.0])
        np.testing.assert_array_equal(nadir_scenario.tracks[1].centers[0], [10.0, -6.0])
        assert nadir_scenario.tracks[1].axis == "y"

    def test_crowded_area_raises(self):
        """Test placement gives up when the area cannot hold the vehicles."""
        cfg = ScenarioConfig(area_extent=(10.0, 10.0), num_vehicles=40)

        with pytest.raises(ConfigurationError):
            scenario_service.generate_scenario(cfg)

    def test_empty_scene_is_rejected(self):
        """Test a scene needs at least one vehicle."""
        with pytest.raises(ConfigurationError):
            scenario_service.generate_scenario(ScenarioConfig(num_vehicles=0))

    def test_zero_area_is_a_configuration_error(self):
        """Test an unvalidated zero-area config fails before any BEV grid is built."""
        cfg = ScenarioConfig(num_vehicles=1).model_copy(update={"area_extent": (0.0, 100.0)})

        with pytest.raises(ConfigurationError) as exc_info:
            scenario_service.ScenarioService(cfg)

        assert exc_info.value.exit_code == 2

    def test_frame_windows(self, tiny_scenario):
        """Test the observation frame is the last input frame."""
        assert tiny_scenario.observation_frame == 1
        assert tiny_scenario.prediction_frames == (2, 3, 4)


class TestRendering:
    """Test cases for rendered views."""

    def test_view_shape_and_range(self, tiny_scenario):
        """Test a view is X x Y x C with values in [0, 1]."""
        view = scenario_service.render_view(tiny_scenario, tiny_scenario.uavs[0], 0)

        assert view.shape == (40, 80, 3)
        assert view.pixels.min() >= 0.0 and view.pixels.max() <= 1.0
        ids = set(np.unique(view.instance_ids)) - {0}
        assert ids <= {t.vehicle_id for t in tiny_scenario.tracks}

    def test_nadir_view_sees_centre_vehicle(self, nadir_scenario):
        """Test the vehicle under the camera fills the principal pixel."""
        view = scenario_service.render_view(nadir_scenario, nadir_scenario.uavs[0], 0)

        assert view.instance_ids[20, 20] == 1

    def test_frame_out_of_range(self, tiny_scenario):
        """Test rendering a frame beyond the sequence fails."""
        with pytest.raises(RangeError):
            scenario_service.render_view(tiny_scenario, tiny_scenario.uavs[0], 99)

    @staticmethod
    def _perceive_everything(scenario):
        frame = scenario.observation_frame
        sparse = {}
        for uav in scenario.uavs:
            view = scenario_service.render_view(scenario, uav, frame)
            scores = sparsifier_service.neighborhood_score(sparsifier_service.importance_map(view))
            sparse[uav.index] = sparsifier_service.top_k_select(view, scores, 1.0)
        selected = tuple(range(len(scenario.uavs)))
        prediction = perception_service.proxy_perceive(scenario, frame, selected, sparse)
        truth = perception_service.ground_truth_labels(scenario.ground_truth[frame])
        return prediction, truth

    def test_full_views_have_no_false_positives(self, tiny_scenario):
        """Test lifting every foreground pixel never leaves the ground-truth cells."""
        prediction, truth = self._perceive_everything(tiny_scenario)

        assert not (prediction.semantic & ~truth.semantic).any()

    def test_nadir_view_lifts_onto_its_vehicle(self, nadir_scenario):
        """Test the centre vehicle is predicted inside its own footprint."""
        prediction, truth = self._perceive_everything(nadir_scenario)

        assert prediction.semantic.any()
        assert not (prediction.semantic & ~truth.semantic).any()


class TestScenarioPersistence:
    """Test cases for save_scenario and load_scenario."""

    def test_round_trip(self, tiny_scenario, tmp_path):
        """Test a saved scenario loads back with identical ground truth."""
        path = scenario_service.save_scenario(tiny_scenario, tmp_path / "scenario.npz")

        loaded = scenario_service.load_scenario(path)

        assert loaded.config == tiny_scenario.config
        assert all(a.equals(b) for a, b in zip(loaded.ground_truth, tiny_scenario.ground_truth))
        np.testing.assert_array_equal(loaded.uavs[1].rotation, tiny_scenario.uavs[1].rotation)

    def test_wrong_schema(self, tmp_path):
        """Test a checkpoint file is not accepted as a scenario."""
        path = storage.write_npz(tmp_path / "x.npz", {"a": np.zeros(1)}, "checkpoint", 1)

        with pytest.raises(ArtifactFormatError):
            scenario_service.load_scenario(path)

    def test_unsupported_version(self, tmp_path):
        """Test a newer schema version is refused."""
        path = storage.write_npz(tmp_path / "x.npz", {"a": np.zeros(1)}, SCENARIO_SCHEMA, 99)

        with pytest.raises(SchemaVersionError):
            scenario_service.load_scenario(path)

    def test_missing_arrays(self, tmp_path):
        """Test a scenario container without its arrays is malformed."""
        path = storage.write_npz(
            tmp_path / "x.npz", {"a": np.zeros(1)}, SCENARIO_SCHEMA, 1, {"config": {}}
        )

        with pytest.raises(ArtifactFormatError):
            scenario_service.load_scenario(path)
