"""
Unit tests for link service.
Tests the Type-I codebook, MMSE equalization, SINR, rates and precoder search.
"""

import numpy as np
import pytest

from app.core.exceptions import (
    ConstraintViolationError,
    EmptySelectionError,
    LinkError,
    RangeError,
    ShapeMismatchError,
)
from app.models import ChannelRealization, LinkState
from app.services import link_service
from app.services.link_service import CO_PHASES, PrecoderSearch

pytestmark = pytest.mark.unit


def random_channel(rng, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def realization(rng) -> ChannelRealization:
    """Two UAVs, two subcarriers, one symbol, 4 x 4 antennas."""
    return ChannelRealization(random_channel(rng, 2, 2, 1, 4, 4), 3.5e9, 15e3)


@pytest.fixture
def both_selected() -> LinkState:
    return LinkState(np.array([1, 1]), np.array([0, 0]), np.array([0.2, 0.2]), 0.05)


class TestCodebook:
    """Test cases for build_codebook."""

    def test_reference_codebook_size(self):
        """Test a 2x1 array with 4x oversampling on both axes has 128 entries."""
        codebook = link_service.build_codebook(2, 1, 4, 4)

        assert len(codebook) == 128
        assert codebook.length == 4

    def test_entries_are_unit_norm(self, tiny_codebook):
        """Test every precoder has unit norm."""
        np.testing.assert_allclose(np.linalg.norm(tiny_codebook.entries, axis=1), 1.0)

    def test_polarizations_are_co_phased(self, tiny_codebook):
        """Test the second polarization equals psi_m times the first."""
        half = tiny_codebook.length // 2
        for entry, (_, _, m) in zip(tiny_codebook.entries, tiny_codebook.labels):
            np.testing.assert_allclose(entry[half:], CO_PHASES[m] * entry[:half])

    def test_index_of_matches_labels(self, tiny_codebook):
        """Test label lookup returns the entry position."""
        for position, label in enumerate(tiny_codebook.labels):
            assert tiny_codebook.index_of(*label) == position

    def test_invalid_dimensions(self):
        """Test zero oversampling is rejected."""
        with pytest.raises(RangeError):
            link_service.build_codebook(2, 1, 0, 4)


class TestEqualization:
    """Test cases for MMSE equalization and SINR."""

    def test_mmse_solves_normal_equations(self, rng):
        """Test (H^H H + sigma^2 I) G = H^H holds for random channels."""
        for _ in range(200):
            users = int(rng.integers(1, 5))
            h = random_channel(rng, 8, users)
            sigma2 = float(rng.uniform(0.01, 2.0))

            g = link_service.mmse_equalizer(h, sigma2)

            residual = (h.conj().T @ h + sigma2 * np.eye(users)) @ g - h.conj().T
            assert np.abs(residual).max() < 1e-10

    def test_vanishing_noise_approaches_pseudo_inverse(self, rng):
        """Test the equalizer tends to the zero-forcing solution."""
        h = random_channel(rng, 8, 3)

        g = link_service.mmse_equalizer(h, 1e-12)

        np.testing.assert_allclose(g, np.linalg.pinv(h), atol=1e-6)

    @pytest.mark.parametrize("noise_var", [0.0, -1.0, float("nan")])
    def test_noise_variance_must_be_positive(self, noise_var):
        """Test a zero, negative or NaN noise level fails the link."""
        with pytest.raises(LinkError):
            link_service.mmse_equalizer(np.ones((2, 1), dtype=complex), noise_var)

    def test_non_finite_channel(self):
        """Test a channel with NaN entries is rejected."""
        with pytest.raises(LinkError):
            link_service.mmse_equalizer(np.full((2, 1), np.nan + 0j), 1.0)

    def test_single_antenna_sinr(self):
        """Test one UAV on one antenna gets |h|^2 p / sigma^2."""
        h = np.array([[0.6 + 0.8j]]) * np.sqrt(0.5)

        sinr = link_service.grid_sinr(h, 0.1)

        assert sinr[0] == pytest.approx(0.5 / 0.1)

    def test_sinr_counts_interference(self):
        """Test cross-talk through the equalizer lowers SINR like extra noise."""
        g = np.eye(2, dtype=complex)
        h_eff = np.array([[1.0, 0.5], [0.5, 1.0]], dtype=complex)

        sinr = link_service.sinr_per_uav(g, h_eff, 0.25)

        np.testing.assert_allclose(sinr, [2.0, 2.0])
        np.testing.assert_allclose(link_service.sinr_per_uav(g, np.eye(2), 0.25), [4.0, 4.0])

    def test_rate_grows_with_power(self, realization, tiny_codebook):
        """Test scaling every transmit power raises every rate."""
        low = LinkState(np.array([1, 1]), np.array([3, 7]), np.array([0.1, 0.1]), 0.05)
        high = LinkState(np.array([1, 1]), np.array([3, 7]), np.array([1.0, 1.0]), 0.05)

        low_rates, _ = link_service.link_rates(realization, low, tiny_codebook)
        high_rates, _ = link_service.link_rates(realization, high, tiny_codebook)

        assert (high_rates.rate_bps > low_rates.rate_bps).all()

    def test_rate_scales_with_bandwidth(self):
        """Test rate is the mean spectral efficiency times K delta_f."""
        sinr = np.full((4, 2, 1), 3.0)

        result = link_service.achievable_rate(sinr, 15e3)

        assert result.spectral_efficiency[0] == pytest.approx(2.0)
        assert result.rate_bps[0] == pytest.approx(2.0 * 4 * 15e3)

    def test_negative_sinr(self):
        """Test a negative SINR is a link error."""
        with pytest.raises(LinkError):
            link_service.achievable_rate(np.full((1, 1, 1), -1.0), 15e3)


class TestLinkState:
    """Test cases for LinkState and the effective channel."""

    def test_double_association_is_rejected(self):
        """Test a UAV may not associate with two base stations."""
        with pytest.raises(ConstraintViolationError) as exc_info:
            LinkState(np.array([[1, 1]]), np.array([0]), np.array([0.2]), 1.0)

        assert exc_info.value.constraint == "binary_association"

    def test_empty_selection(self, realization, tiny_codebook):
        """Test an effective channel needs at least one selected UAV."""
        link = LinkState(np.array([0, 0]), np.array([0, 0]), np.array([0.2, 0.2]), 1.0)

        with pytest.raises(EmptySelectionError):
            link_service.effective_channel(realization.tensor, link, tiny_codebook)

    def test_codebook_length_mismatch(self, realization, both_selected):
        """Test precoders must match the transmit antenna count."""
        codebook = link_service.build_codebook(4, 1, 1, 1)

        with pytest.raises(ShapeMismatchError):
            link_service.effective_channel(realization.tensor, both_selected, codebook)

    def test_effective_channel_columns(self, realization, both_selected, tiny_codebook):
        """Test column u is H_u w_u sqrt(p_u)."""
        h_eff = link_service.effective_channel(realization.tensor, both_selected, tiny_codebook)

        assert h_eff.shape == (2, 1, 4, 2)
        expected = realization.tensor[1, 0, 0] @ tiny_codebook.entries[0] * np.sqrt(0.2)
        np.testing.assert_allclose(h_eff[0, 0, :, 1], expected)


class TestPrecoderSearch:
    """Test cases for greedy and joint codebook search."""

    def test_joint_dominates_greedy(self, realization, both_selected, tiny_codebook):
        """Test enumeration never scores below coordinate ascent."""
        search = PrecoderSearch(
            realization, both_selected, tiny_codebook, objective="sum_reward"
        )

        greedy = search.greedy(max_sweeps=5)
        joint = search.joint()

        assert joint.objective >= greedy.objective

    def test_greedy_history_is_monotone(self, realization, both_selected, tiny_codebook):
        """Test each sweep keeps or improves the objective."""
        search = PrecoderSearch(realization, both_selected, tiny_codebook)

        result = search.greedy(max_sweeps=5)

        assert all(b >= a for a, b in zip(result.history, result.history[1:]))
        assert 1 <= result.sweeps <= 5

    def test_auto_mode_runs_joint_when_small(self, realization, both_selected, tiny_codebook):
        """Test auto mode enumerates a 256-candidate space."""
        result = link_service.exhaustive_precoder_search(
            realization, both_selected, tiny_codebook, mode="auto", joint_limit=256
        )

        assert result.mode == "joint"
        assert result.indices.shape == (2,)

    def test_auto_mode_falls_back_to_greedy(self, realization, both_selected, tiny_codebook):
        """Test auto mode uses greedy above the joint limit."""
        result = link_service.exhaustive_precoder_search(
            realization, both_selected, tiny_codebook, mode="auto", joint_limit=10
        )

        assert result.mode == "greedy"

    def test_search_is_deterministic(self, realization, both_selected, tiny_codebook):
        """Test repeated searches agree."""
        first = link_service.exhaustive_precoder_search(
            realization, both_selected, tiny_codebook, mode="greedy"
        )
        second = link_service.exhaustive_precoder_search(
            realization, both_selected, tiny_codebook, mode="greedy"
        )

        np.testing.assert_array_equal(first.indices, second.indices)

    def test_latency_objective(self):
        """Test the payload objective is minus the worst latency."""
        rates = np.array([1000.0, 500.0])

        assert link_service.search_objective(rates, np.array([1000.0, 1000.0])) == -2.0
        assert link_service.search_objective(rates, None) == 1500.0

    def test_zero_rate_has_unbounded_latency(self):
        """Test a dead link scores minus infinity."""
        value = link_service.search_objective(np.array([0.0, 10.0]), np.array([1.0, 1.0]))

        assert value == -np.inf

    def test_empty_codebook(self, realization, both_selected, tiny_codebook):
        """Test searching an empty codebook is a link error."""
        empty = type(tiny_codebook)(
            np.zeros((0, 4), dtype=complex), (), 2, 1, 2, 1
        )

        with pytest.raises(LinkError):
            PrecoderSearch(realization, both_selected, empty)
