"""
Unit tests for the MLP and momentum SGD.
"""

import numpy as np
import pytest

from app.core.exceptions import RangeError, ShapeMismatchError
from app.services.neural_net import MLP, MomentumSGD

pytestmark = pytest.mark.unit


@pytest.fixture
def net(rng) -> MLP:
    return MLP((3, 5, 2), rng, output_scale=1.0)


def loss_at(net: MLP, flat: np.ndarray, x: np.ndarray, target: np.ndarray) -> float:
    net.set_flat(flat)
    out = net.forward(x)
    return float(((out - target) ** 2).sum() / x.shape[0])


class TestMLP:
    """Test cases for forward and backward passes."""

    def test_gradients_match_finite_differences(self, net, rng):
        """Test backpropagation against central differences."""
        # Arrange
        x = rng.standard_normal((4, 3))
        target = rng.standard_normal((4, 2))
        flat = net.get_flat()

        # Act
        _, grads = net.mse_step(x, target)
        analytic = np.concatenate([g.ravel() for g in grads])
        numeric = np.zeros_like(flat)
        eps = 1e-6
        for n in range(flat.size):
            up, down = flat.copy(), flat.copy()
            up[n] += eps
            down[n] -= eps
            numeric[n] = (loss_at(net, up, x, target) - loss_at(net, down, x, target)) / (
                2 * eps
            )

        # Assert
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_output_shape(self, net, rng):
        """Test a batch maps to batch x outputs and a vector is promoted."""
        assert net.forward(rng.standard_normal((7, 3))).shape == (7, 2)
        assert net.forward(np.zeros(3)).shape == (1, 2)

    def test_flat_parameters_round_trip(self, net):
        """Test setting the flat vector back restores the outputs."""
        x = np.ones((1, 3))
        before = net.forward(x).copy()
        flat = net.get_flat()

        net.set_flat(np.zeros_like(flat))
        assert np.all(net.forward(x) == 0.0)
        net.set_flat(flat)

        np.testing.assert_array_equal(net.forward(x), before)

    def test_flat_vector_length(self, net):
        """Test a wrong-length parameter vector is rejected."""
        with pytest.raises(ShapeMismatchError):
            net.set_flat(np.zeros(3))

    def test_input_width(self, net):
        """Test the input width must match the first layer."""
        with pytest.raises(ShapeMismatchError):
            net.forward(np.zeros((2, 4)))

    def test_invalid_architecture(self, rng):
        """Test layer sizes and activations are validated."""
        with pytest.raises(ShapeMismatchError):
            MLP((3,), rng)
        with pytest.raises(RangeError):
            MLP((3, 2), rng, activation="relu6")


class TestMomentumSGD:
    """Test cases for MomentumSGD."""

    def test_velocity_accumulates(self):
        """Test two steps with a constant gradient."""
        param = np.array([1.0])
        optimizer = MomentumSGD([param], learning_rate=0.1, momentum=0.5)

        optimizer.step([param], [np.array([1.0])])
        assert param[0] == pytest.approx(0.9)
        optimizer.step([param], [np.array([1.0])])

        assert param[0] == pytest.approx(0.9 - 0.15)

    def test_training_reduces_loss(self, net, rng):
        """Test fitting a fixed regression target lowers the loss."""
        x = rng.standard_normal((32, 3))
        target = np.stack([np.sin(x[:, 0]), x[:, 1] * x[:, 2]], axis=1)
        optimizer = MomentumSGD(net.params, learning_rate=0.05, momentum=0.9)

        first, _ = net.mse_step(x, target)
        for _ in range(300):
            loss, grads = net.mse_step(x, target)
            optimizer.step(net.params, grads)

        assert loss < 0.5 * first
