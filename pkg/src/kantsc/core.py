"""Layer contract, parameters, errors and the finite-difference gradient checker.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.
Every layer caches what it needs during ``forward`` and consumes it in
``backward``; parameter gradients are *accumulated* so regularisers can add
their contribution after the data-loss pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

DTYPE = np.float64


class KantscError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(KantscError):
    exit_code = 2


class CapabilityError(ConfigError):
    pass


class DataError(KantscError):
    exit_code = 3


class NumericError(KantscError):
    exit_code = 4


class CheckpointError(KantscError):
    exit_code = 5


class StateError(KantscError):
    pass


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=DTYPE)


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.value = as_tensor(self.value)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ConfigError(f"{self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}")

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class Layer:
    """Base class for differentiable layers operating on ``[batch, features]``."""

    in_dim: int | None = None
    out_dim: int | None = None

    def __init__(self):
        self.train = True
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray, param_grads: bool = True) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[Param]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-learnable state that must survive a checkpoint round trip."""
        return {}

    def near_kink(self, x: np.ndarray, margin: float) -> np.ndarray:
        """Rows of ``x`` whose evaluation sits within ``margin`` of a non-smooth point."""
        return np.zeros(len(x), dtype=bool)

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def set_train(self, mode: bool) -> None:
        self.train = mode

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = as_tensor(x)
        if x.ndim != 2 or (self.in_dim is not None and x.shape[1] != self.in_dim):
            raise ConfigError(f"{type(self).__name__}: expected [batch, {self.in_dim}], got {list(x.shape)}")
        return x

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}: backward called before forward")
        return self._cache


@dataclass
class CheckReport:
    max_rel_error: float
    tolerance: float
    worst: str
    n_checked: int
    per_tensor: dict[str, float]

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tolerance)


def rel_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def grad_check(layer: Layer, x: np.ndarray, epsilon: float = 1e-5, tolerance: float = 1e-4,
               probe: np.ndarray | None = None, max_entries: int | None = None,
               rng: np.random.Generator | None = None) -> CheckReport:
    """Compare analytic gradients against central finite differences.

    The output is scalarised as ``sum(probe * y)`` with ``probe`` defaulting to
    ones (plain sum). The layer must be deterministic (dropout off, batch norm
    in eval mode). ``max_entries`` caps the number of checked entries per
    tensor, sampled with ``rng``.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ConfigError("epsilon must lie in (0, 1e-2]")
    x = as_tensor(x).copy()
    rng = rng if rng is not None else np.random.default_rng(0)

    y = layer.forward(x)
    w = np.ones_like(y) if probe is None else as_tensor(probe)
    layer.zero_grads()
    dx = layer.backward(w)
    analytic = {p.name: p.grad.copy() for p in layer.params()}

    def diff(f_plus: np.ndarray, f_minus: np.ndarray) -> float:
        # elementwise difference first: outputs untouched by the perturbation cancel exactly
        return float(np.sum(w * (f_plus - f_minus)) / (2.0 * epsilon))

    def entries(shape) -> Iterable[tuple]:
        idx = list(np.ndindex(*shape))
        if max_entries is not None and len(idx) > max_entries:
            pick = rng.choice(len(idx), size=max_entries, replace=False)
            idx = [idx[i] for i in sorted(pick)]
        return idx

    per_tensor: dict[str, float] = {}
    n_checked = 0

    def check(name: str, target: np.ndarray, grad: np.ndarray, run: Callable[[], np.ndarray]):
        nonlocal n_checked
        worst = 0.0
        for i in entries(target.shape):
            orig = target[i]
            target[i] = orig + epsilon
            fp = run().copy()
            target[i] = orig - epsilon
            fm = run().copy()
            target[i] = orig
            num = diff(fp, fm)
            worst = max(worst, float(rel_error(np.asarray(grad[i]), np.asarray(num))))
            n_checked += 1
        per_tensor[name] = worst

    for p in layer.params():
        check(p.name, p.value, analytic[p.name], lambda: layer.forward(x))
    check("input", x, dx, lambda: layer.forward(x))

    worst_name = max(per_tensor, key=per_tensor.get) if per_tensor else ""
    return CheckReport(max_rel_error=per_tensor.get(worst_name, 0.0), tolerance=tolerance,
                       worst=worst_name, n_checked=n_checked, per_tensor=per_tensor)
