"""
Unit tests for diffusion service.
Tests the noise schedule, the implicit and ancestral samplers and denoiser training.
"""

import numpy as np
import pytest

from app.core.exceptions import EmptyDatasetError, ScheduleError, ShapeMismatchError
from app.schemas import DiffusionConfig
from app.services import diffusion_service
from app.services.diffusion_service import DiffusionModel, DiffusionSchedule

pytestmark = pytest.mark.unit


@pytest.fixture
def schedule() -> DiffusionSchedule:
    return DiffusionSchedule.linear(100, 1e-4, 2e-2)


@pytest.fixture
def small_config() -> DiffusionConfig:
    return DiffusionConfig(
        total_steps=20, ddim_steps=5, hidden_width=32, learning_rate=5e-3, updates_per_step=1
    )


class TestSchedule:
    """Test cases for DiffusionSchedule."""

    def test_alpha_bar_starts_at_one(self, schedule):
        """Test tau = 0 means no noise and alpha_bar decreases."""
        assert schedule.alpha_bar(0) == 1.0
        assert schedule.alpha_bars.size == 101
        assert (np.diff(schedule.alpha_bars) < 0).all()

    def test_subsequence(self, schedule):
        """Test ten evenly spaced steps counting down from T."""
        assert schedule.subsequence(10) == (100, 90, 80, 70, 60, 50, 40, 30, 20, 10)

    @pytest.mark.parametrize("steps", [0, 101])
    def test_subsequence_bounds(self, schedule, steps):
        """Test D must lie in [1, T]."""
        with pytest.raises(ScheduleError):
            schedule.subsequence(steps)

    @pytest.mark.parametrize("betas", [[], [0.0, 0.1], [0.1, 1.0]])
    def test_invalid_betas(self, betas):
        """Test empty schedules and betas outside (0, 1) are rejected."""
        with pytest.raises(ScheduleError):
            DiffusionSchedule(np.array(betas))

    def test_step_out_of_range(self, schedule):
        """Test alpha_bar beyond T is a schedule error."""
        with pytest.raises(ScheduleError):
            schedule.alpha_bar(101)

    def test_forward_noise_statistics(self, schedule, rng):
        """Test noised samples have mean sqrt(abar) w0 and variance 1 - abar."""
        w0 = np.array([1.0, -2.0, 0.5, 3.0])
        abar = schedule.alpha_bar(50)

        samples = diffusion_service.forward_noise(
            w0, 50, schedule, rng.standard_normal((100_000, 4))
        )

        np.testing.assert_allclose(samples.mean(axis=0), np.sqrt(abar) * w0, atol=0.01)
        np.testing.assert_allclose(samples.var(axis=0), np.full(4, 1.0 - abar), rtol=0.02)

    def test_timestep_embedding_shape(self):
        """Test even and odd embedding widths."""
        assert diffusion_service.timestep_embedding(np.arange(3), 16).shape == (3, 16)
        assert diffusion_service.timestep_embedding(5, 7).shape == (7,)


class TestSamplers:
    """Test cases for the implicit and ancestral samplers."""

    def test_implicit_sampler_with_perfect_predictor(self, schedule, rng):
        """Test a predictor returning w0 lands on w0 after D evaluations."""
        w0 = rng.standard_normal(6)

        result, evaluations = diffusion_service.ddim_sample(
            lambda w, tau: w0, rng.standard_normal(6), schedule, 10
        )

        np.testing.assert_allclose(result, w0, atol=1e-10)
        assert evaluations == 10

    def test_ancestral_sampler_with_perfect_predictor(self, schedule, rng):
        """Test the full chain also lands on w0 but costs T evaluations."""
        w0 = rng.standard_normal(6)

        result, evaluations = diffusion_service.ancestral_sample(
            lambda w, tau: w0, rng.standard_normal(6), schedule, rng
        )

        np.testing.assert_allclose(result, w0, atol=1e-10)
        assert evaluations == 100

    def test_ddim_step_must_move_backwards(self, schedule):
        """Test a step to a later tau is refused."""
        with pytest.raises(ScheduleError):
            diffusion_service.ddim_step(np.zeros(2), np.zeros(2), 10, 10, schedule)

    def test_posterior_at_first_step(self, schedule, rng):
        """Test q(w_0 | w_1, w0) collapses onto w0."""
        w0 = rng.standard_normal(3)

        mean, variance = diffusion_service.posterior_mean_variance(
            w0, rng.standard_normal(3), 1, schedule
        )

        np.testing.assert_allclose(mean, w0, atol=1e-12)
        assert variance == pytest.approx(0.0, abs=1e-15)

    def test_posterior_step_range(self, schedule):
        """Test the posterior is defined for tau in [1, T]."""
        with pytest.raises(ScheduleError):
            diffusion_service.posterior_mean_variance(np.zeros(1), np.zeros(1), 0, schedule)

    def test_estimate_noise_without_noise(self):
        """Test no noise is implied at alpha_bar = 1."""
        np.testing.assert_array_equal(
            diffusion_service.estimate_noise(np.ones(2), np.zeros(2), 1.0), np.zeros(2)
        )


class TestDiffusionModel:
    """Test cases for DiffusionModel training and generation."""

    def test_training_reduces_loss(self, small_config, rng):
        """Test the denoiser learns a condition-to-vector mapping."""
        conditions = np.eye(4)
        w0 = np.array([[1, 0, 0, 1], [0, 1, 1, 0], [-1, 0, 1, 0], [0, -1, 0, -1]], float)

        _, losses = diffusion_service.train_diffusion(w0, conditions, small_config, rng, 600)

        assert np.mean(losses[-20:]) < np.mean(losses[:20])

    def test_generate_shape_and_cost(self, small_config, rng):
        """Test generation returns one vector after D evaluations."""
        model = DiffusionModel(4, 3, small_config, rng)

        vector, evaluations = model.generate(np.zeros(3), rng)
        _, chain_evaluations = model.generate_full_chain(np.zeros(3), rng)

        assert vector.shape == (4,)
        assert evaluations == 5
        assert chain_evaluations == 20

    def test_condition_width(self, small_config, rng):
        """Test a condition of the wrong width is rejected."""
        model = DiffusionModel(4, 3, small_config, rng)

        with pytest.raises(ShapeMismatchError):
            model.predict_w0(np.zeros(4), 5, np.zeros(2))

    def test_empty_dataset(self, small_config, rng):
        """Test training without samples is refused."""
        with pytest.raises(EmptyDatasetError):
            diffusion_service.train_diffusion(
                np.zeros((0, 4)), np.zeros((0, 3)), small_config, rng, 1
            )
