"""Linear, ReLU and dropout layers for the MLP baselines and hybrids."""

from __future__ import annotations

import numpy as np

from .core import ConfigError, Layer, Param, StateError, as_tensor


class Linear(Layer):
    """Affine map ``y = x @ W.T + b``."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(in_dim)
        self.W = Param("W", rng.uniform(-bound, bound, (out_dim, in_dim)))
        self.b = Param("b", rng.uniform(-bound, bound, out_dim))

    @classmethod
    def from_weights(cls, W, b=None) -> "Linear":
        W = as_tensor(np.atleast_2d(W))
        layer = cls(W.shape[1], W.shape[0])
        layer.W.value[...] = W
        layer.b.value[...] = 0.0 if b is None else as_tensor(b)
        return layer

    def params(self):
        return [self.W, self.b]

    def forward(self, x):
        x = self._check_input(x)
        self._cache = x
        return x @ self.W.value.T + self.b.value

    def backward(self, grad, param_grads=True):
        x = self._cached()
        if param_grads:
            self.W.grad += grad.T @ x
            self.b.grad += grad.sum(axis=0)
        return grad @ self.W.value


class ReLU(Layer):
    def forward(self, x):
        x = as_tensor(x)
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, grad, param_grads=True):
        # subgradient 0 at x == 0
        return np.where(self._cached(), grad, 0.0)

    def near_kink(self, x, margin):
        return (np.abs(as_tensor(x)) < margin).any(axis=1)


class Dropout(Layer):
    """Inverted dropout; identity in eval mode."""

    def __init__(self, rate: float = 0.1, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x):
        x = as_tensor(x)
        if not self.train or self.rate == 0.0:
            self._cache = None
            self._fresh = True
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._cache = keep / (1.0 - self.rate)
        self._fresh = True
        return x * self._cache

    def backward(self, grad, param_grads=True):
        if not getattr(self, "_fresh", False):
            raise StateError("Dropout: backward called before forward")
        return grad if self._cache is None else grad * self._cache
