"""
Small fully-connected networks with exact backpropagation and momentum SGD.
"""

from collections.abc import Sequence

import numpy as np

from app.core.exceptions import RangeError, ShapeMismatchError

ACTIVATIONS = {
    "tanh": (np.tanh, lambda out: 1.0 - out**2),
    "identity": (lambda x: x, lambda out: np.ones_like(out)),
}


class MLP:
    """Dense layers with a shared hidden activation and a linear output."""

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        activation: str = "tanh",
        output_scale: float = 0.01,
    ):
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeMismatchError("an MLP needs at least an input and an output size")
        if activation not in ACTIVATIONS:
            raise RangeError(f"unknown activation {activation!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        last = len(self.sizes) - 2
        for n, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:], strict=True)):
            scale = output_scale if n == last else 1.0
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale / np.sqrt(fan_in))
            self.biases.append(np.zeros(fan_out))
        self._cache: list[np.ndarray] = []

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases, strict=True) for p in pair]

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != sum(p.size for p in self.params):
            raise ShapeMismatchError("flat parameter vector has the wrong length")
        offset = 0
        for param in self.params:
            param[...] = flat[offset : offset + param.size].reshape(param.shape)
            offset += param.size

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward pass; caches activations for :meth:`backward`."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_size:
            raise ShapeMismatchError(
                f"network expects {self.input_size} inputs, got {x.shape[1]}"
            )
        act, _ = ACTIVATIONS[self.activation]
        self._cache = [x]
        out = x
        for n, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            out = out @ w + b
            if n < len(self.weights) - 1:
                out = act(out)
            self._cache.append(out)
        return out

    def backward(self, grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients for d(loss)/d(output) of the last forward pass."""
        _, deriv = ACTIVATIONS[self.activation]
        grad = np.atleast_2d(grad_out)
        grads: list[np.ndarray] = []
        for n in range(len(self.weights) - 1, -1, -1):
            inputs = self._cache[n]
            grads[:0] = [inputs.T @ grad, grad.sum(axis=0)]
            if n > 0:
                grad = (grad @ self.weights[n].T) * deriv(self._cache[n])
        return grads

    def mse_step(self, x: np.ndarray, target: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean over the batch of squared error summed over outputs, and its gradients."""
        out = self.forward(x)
        diff = out - np.atleast_2d(target)
        batch = diff.shape[0]
        loss = float((diff**2).sum() / batch)
        return loss, self.backward(2.0 * diff / batch)


class MomentumSGD:
    """v <- mu v - lr g; p <- p + v."""

    def __init__(self, params: Sequence[np.ndarray], learning_rate: float, momentum: float):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        for param, grad, velocity in zip(params, grads, self.velocity, strict=True):
            velocity *= self.momentum
            velocity -= self.learning_rate * grad
            param += velocity
