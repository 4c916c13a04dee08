"""
Unit tests for experiment service.
Tests sweeps, crossing detection, communication costs and reports.
"""

import numpy as np
import pytest

from app.core.exceptions import ArtifactNotFoundError, ConfigurationError
from app.db.storage import RunDirectory
from app.services import experiment_service

pytestmark = pytest.mark.unit


def square(x: int) -> int:
    return x * x


@pytest.fixture
def run(tiny_config, tmp_path) -> RunDirectory:
    resolved = tiny_config.model_dump(mode="json", exclude={"output_dir"})
    return RunDirectory.create("test", tiny_config.seed, resolved, "", str(tmp_path))


class TestHelpers:
    """Test cases for small experiment helpers."""

    def test_map_points_keeps_order(self):
        """Test the serial path maps in order."""
        assert experiment_service.map_points(square, [3, 1, 2], workers=1) == [9, 1, 4]

    def test_crossing_flags(self):
        """Test a swap of order is flagged at the point where the curves meet."""
        flags = experiment_service.crossing_flags([1.0, 0.5, 0.0], [0.0, 0.5, 1.0])

        assert flags == [False, True, False]

    def test_identical_curves_never_cross(self):
        """Test curves with the same shape are not flagged."""
        assert experiment_service.crossing_flags([0.1, 0.2, 0.4], [10.0, 20.0, 40.0]) == [
            False,
            False,
            False,
        ]

    def test_strict_crossing_between_points(self):
        """Test a sign change between neighbours flags the later point."""
        flags = experiment_service.crossing_flags([0.0, 1.0, 0.2, 0.0], [0.0, 0.3, 1.0, 0.5])

        assert flags[2]

    @pytest.mark.parametrize(
        "num_uavs,order",
        [(1, (0,)), (2, (0, 1)), (3, (0, 1, 2)), (4, (0, 2, 1, 3)), (6, (0, 3, 1, 2, 4, 5))],
    )
    def test_spread_order(self, num_uavs, order):
        """Test prefixes of the UAV order pick far-apart ring positions first."""
        assert experiment_service.spread_order(num_uavs) == order

    def test_default_points(self, tiny_config):
        """Test UAV counts come back as floats on the sweep axis."""
        assert experiment_service.default_points(tiny_config, "uav_count") == (1.0, 2.0)
        assert experiment_service.default_points(tiny_config, "lambda") == (0.1, 0.5, 0.9)


class TestCommunicationCosts:
    """Test cases for communication_costs."""

    def test_default_costs(self, default_config):
        """Test the reference frame payload and the reported 15% ratio."""
        costs = experiment_service.communication_costs(default_config)

        assert costs["image_payload_bits"] == 40_320
        assert costs["feature_payload_bits"] == 10_240_000
        assert costs["simulated_cost_ratio"] == pytest.approx(40_320 / 10_240_000)
        assert costs["reference_cost_ratio"] == pytest.approx(0.150, abs=0.002)

    def test_reference_costs_are_optional(self, default_config):
        """Test no reference ratio is reported without reference costs."""
        config = default_config.model_copy(
            update={"report": default_config.report.model_copy(update={"reference_costs": None})}
        )

        assert "reference_cost_ratio" not in experiment_service.communication_costs(config)


class TestTrendSweeps:
    """Test cases for kappa and UAV-count sweeps."""

    def test_iou_grows_with_kappa(self, tiny_config):
        """Test keeping more pixels never loses BEV cells."""
        records = experiment_service.trend_sweep(tiny_config, "kappa", (0.05, 0.15, 0.25, 0.5))

        ious = [r.mean_iou for r in records]
        assert all(b >= a for a, b in zip(ious, ious[1:]))
        payloads = [r.payload_bits for r in records]
        assert payloads == sorted(payloads)

    def test_iou_grows_with_uav_count(self, tiny_config):
        """Test adding UAVs never loses BEV cells."""
        records = experiment_service.trend_sweep(tiny_config, "uav_count", (1.0, 2.0))

        assert records[1].mean_iou >= records[0].mean_iou
        assert records[1].payload_bits == 2 * records[0].payload_bits

    def test_perception_at_full_kappa(self, tiny_scenario):
        """Test the full-image IoU lies in [0, 1]."""
        iou, pq = experiment_service.perception_at(
            tiny_scenario, (0, 1), 1.0, tiny_scenario.observation_frame
        )

        assert 0.0 <= iou <= 1.0
        assert 0.0 <= pq <= 1.0

    def test_unknown_axis(self, tiny_config, run):
        """Test sweeping an unknown axis is refused."""
        with pytest.raises(ConfigurationError):
            experiment_service.run_sweep(tiny_config, "altitude", None, run)

    def test_run_sweep_writes_ledger(self, tiny_config, run):
        """Test the sweep ledger has one row per point."""
        experiment_service.run_sweep(tiny_config, "uav_count", None, run)

        assert len(run.ledger("sweep").read_text().strip().splitlines()) == 1 + 2


class TestReport:
    """Test cases for build_report."""

    def test_report_without_ledgers(self, run):
        """Test reporting an empty run directory fails."""
        with pytest.raises(ArtifactNotFoundError):
            experiment_service.build_report(run)

    def test_report_summarizes_ledgers(self, tiny_config, run):
        """Test row counts and the long table cover every ledger."""
        experiment_service.run_sweep(tiny_config, "kappa", (0.05, 0.25), run)

        text, table = experiment_service.build_report(run)

        assert f"run: {run.run_id}" in text
        assert "sweep.rows: 2" in text
        assert set(table["ledger"]) == {"sweep"}
        assert np.isfinite(table["value"].dropna()).all()
