"""B-spline bases, batch normalisation and the KAN layer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, Layer, Param, as_tensor


@dataclass(frozen=True)
class SplineSpec:
    """Uniform knot vector of order ``k`` over ``interval`` split into ``grid_size`` pieces."""

    grid_size: int = 5
    order: int = 3
    interval: tuple[float, float] = (-1.0, 1.0)
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.grid_size < 1 or self.order < 0:
            raise ConfigError(f"invalid spline spec G={self.grid_size} k={self.order}")
        lo, hi = self.interval
        if not hi > lo:
            raise ConfigError("spline interval must satisfy lo < hi")
        h = (hi - lo) / self.grid_size
        j = np.arange(self.grid_size + 2 * self.order + 1)
        knots = lo + (j - self.order) * h
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.order

    @property
    def step(self) -> float:
        lo, hi = self.interval
        return (hi - lo) / self.grid_size


def _padded_knots(spec: SplineSpec) -> np.ndarray:
    # k extra uniform knots per side so the local de Boor table never indexes past the ends
    k, G = spec.order, spec.grid_size
    lo, _ = spec.interval
    return lo + (np.arange(G + 4 * k + 1) - 2 * k) * spec.step


def _local_basis(x: np.ndarray, span: np.ndarray, t: np.ndarray, k: int) -> list[list[np.ndarray]]:
    """Triangular de Boor table; entry ``[j][r]`` is B_{span-j+r, j}(x)."""
    table = [[np.ones_like(x)]]
    left = [None] + [x - t[span + 1 - j] for j in range(1, k + 1)]
    right = [None] + [t[span + j] - x for j in range(1, k + 1)]
    for j in range(1, k + 1):
        prev = table[-1]
        row = []
        saved = np.zeros_like(x)
        for r in range(j):
            temp = prev[r] / (right[r + 1] + left[j - r])
            row.append(saved + right[r + 1] * temp)
            saved = left[j - r] * temp
        row.append(saved)
        table.append(row)
    return table


def _scatter(local: list[np.ndarray], span: np.ndarray, inside: np.ndarray, spec: SplineSpec) -> np.ndarray:
    k, nb = spec.order, spec.n_basis
    out = np.zeros(span.shape + (nb + 2 * k,))
    for r, v in enumerate(local):
        np.put_along_axis(out, (span - k + r)[..., None], np.where(inside, v, 0.0)[..., None], axis=-1)
    # padded index i + k holds basis i; functions hanging off either end are dropped
    return np.ascontiguousarray(out[..., k:k + nb])


def basis_and_grad(x, spec: SplineSpec) -> tuple[np.ndarray, np.ndarray]:
    """Values and x-derivatives of all ``G + k`` basis functions, shape ``x.shape + (G+k,)``.

    The Cox-de Boor recursion runs over the full knot vector, so each basis
    function has its usual local support: inside ``interval`` they form a
    partition of unity, beyond it they taper off and vanish outside
    ``[knots[0], knots[-1])``. Only the ``k + 1`` functions supported on the
    span containing ``x`` are evaluated (span found by binary search).
    """
    x = np.asarray(x, dtype=np.float64)
    k = spec.order
    t = _padded_knots(spec)
    inside = (x >= spec.knots[0]) & (x < spec.knots[-1])
    span = np.clip(np.searchsorted(t, x, side="right") - 1, k, len(t) - k - 2)
    table = _local_basis(x, span, t, k)
    values = _scatter(table[k], span, inside, spec)
    if k == 0:
        return values, np.zeros_like(values)
    lower = table[k - 1]  # lower[r] = B_{span-k+1+r, k-1}
    dlocal = []
    for r in range(k + 1):
        i = span - k + r
        d = np.zeros_like(x)
        if r > 0:
            d = d + k / (t[i + k] - t[i]) * lower[r - 1]
        if r < k:
            d = d - k / (t[i + k + 1] - t[i + 1]) * lower[r]
        dlocal.append(d)
    return values, _scatter(dlocal, span, inside, spec)


def bspline_basis(x, spec: SplineSpec) -> np.ndarray:
    return basis_and_grad(x, spec)[0]


def bspline_basis_grad(x, spec: SplineSpec) -> np.ndarray:
    return basis_and_grad(x, spec)[1]


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


class BatchNorm1d(Layer):
    """Per-feature batch normalisation over the batch axis.

    Training normalises with the biased batch variance; the running variance
    is updated with the unbiased estimate. Eval mode is a fixed affine map.
    """

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.in_dim = self.out_dim = dim
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param("gamma", np.ones(dim))
        self.beta = Param("beta", np.zeros(dim))
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Normalised input before the affine map; cached for backward."""
        x = self._check_input(x)
        if self.train and x.shape[0] > 0:
            n = x.shape[0]
            if n < 2:
                raise ConfigError("batch norm in train mode needs a batch of at least 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.running_mean *= 1.0 - m
            self.running_mean += m * mean
            self.running_var *= 1.0 - m
            self.running_var += m * var * n / (n - 1)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, self.train)
        return xhat

    def forward(self, x):
        xhat = self.normalize(x)
        return xhat * self.gamma.value + self.beta.value

    def backward(self, grad, param_grads=True):
        xhat, inv_std, train = self._cached()
        if param_grads:
            self.gamma.grad += np.sum(grad * xhat, axis=0)
            self.beta.grad += np.sum(grad, axis=0)
        g = grad * self.gamma.value
        if not train:
            return g * inv_std
        n = g.shape[0]
        if n == 0:
            return g
        return inv_std / n * (n * g - g.sum(axis=0) - xhat * np.sum(g * xhat, axis=0))


class KanLayer(Layer):
    """Sum of a silu base path and a B-spline path on every input-output edge.

    ``y[q] = sum_p w_base[q,p] silu(x[p]) + sum_p spline_scale[q,p] sum_i w_spline[q,p,i] B_i(x[p])``
    with ``x`` batch-normalised first.
    """

    def __init__(self, in_dim: int, out_dim: int, spec: SplineSpec | None = None,
                 use_base: bool = True, use_spline: bool = True, batch_norm: bool = True,
                 rng: np.random.Generator | None = None):
        super().__init__()
        if not (use_base or use_spline):
            raise ConfigError("KAN layer needs at least one of the base and spline paths")
        self.in_dim, self.out_dim = in_dim, out_dim
        self.spec = spec or SplineSpec()
        self.use_base, self.use_spline = use_base, use_spline
        self.bn = None
        if batch_norm:
            self.bn = BatchNorm1d(in_dim)
            for p in self.bn.params():
                p.name = f"bn.{p.name}"
        rng = rng if rng is not None else np.random.default_rng(0)
        nb = self.spec.n_basis
        self.w_base = None
        self.w_spline = self.spline_scale = None
        if use_base:
            bound = np.sqrt(6.0 / in_dim)
            self.w_base = Param("w_base", rng.uniform(-bound, bound, (out_dim, in_dim)))
        if use_spline:
            s = 0.1 / np.sqrt(in_dim * nb)
            self.w_spline = Param("w_spline", rng.uniform(-s, s, (out_dim, in_dim, nb)))
            self.spline_scale = Param("spline_scale", np.ones((out_dim, in_dim)))

    def params(self):
        ps = [p for p in (self.w_base, self.w_spline, self.spline_scale) if p is not None]
        if self.bn is not None:
            ps += self.bn.params()
        return ps

    def buffers(self):
        return {f"bn.{k}": v for k, v in self.bn.buffers().items()} if self.bn is not None else {}

    def set_train(self, mode):
        self.train = mode
        if self.bn is not None:
            self.bn.set_train(mode)

    def _normalized(self, x):
        x = self._check_input(x)
        if self.bn is None:
            return x
        return self.bn.forward(x)

    def components(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Base and spline addends of the output (their sum is ``forward(x)``)."""
        xh = self._normalized(x)
        n = xh.shape[0]
        base = np.zeros((n, self.out_dim))
        spline = np.zeros((n, self.out_dim))
        s = ds = basis = dbasis = None
        if self.use_base:
            s = silu(xh)
            base = s @ self.w_base.value.T
        if self.use_spline:
            basis, dbasis = basis_and_grad(xh, self.spec)
            coef = self.spline_scale.value[..., None] * self.w_spline.value
            spline = basis.reshape(n, self.in_dim * self.spec.n_basis) @ coef.reshape(self.out_dim, -1).T
        self._cache = (xh, s, basis, dbasis)
        return base, spline

    def forward(self, x):
        base, spline = self.components(x)
        return base + spline

    def backward(self, grad, param_grads=True):
        xh, s, basis, dbasis = self._cached()
        n = xh.shape[0]
        dxh = np.zeros_like(xh)
        if self.use_base:
            if param_grads:
                self.w_base.grad += grad.T @ s
            dxh += (grad @ self.w_base.value) * silu_grad(xh)
        if self.use_spline:
            nb = self.spec.n_basis
            scale, w = self.spline_scale.value, self.w_spline.value
            coef = scale[..., None] * w
            if param_grads:
                dcoef = (grad.T @ basis.reshape(n, self.in_dim * nb)).reshape(self.out_dim, self.in_dim, nb)
                self.w_spline.grad += dcoef * scale[..., None]
                self.spline_scale.grad += np.sum(dcoef * w, axis=-1)
            dbasis_out = (grad @ coef.reshape(self.out_dim, -1)).reshape(n, self.in_dim, nb)
            dxh += np.sum(dbasis_out * dbasis, axis=-1)
        if self.bn is None:
            return dxh
        return self.bn.backward(dxh, param_grads)

    def near_kink(self, x, margin):
        xh = as_tensor(x)
        if self.bn is not None:
            bn = self.bn
            mean = bn.running_mean
            xh = (xh - mean) / np.sqrt(bn.running_var + bn.eps) * bn.gamma.value + bn.beta.value
        if not self.use_spline:
            return np.zeros(len(xh), dtype=bool)
        dist = np.abs(xh[..., None] - self.spec.knots).min(axis=-1)
        return (dist < margin).any(axis=1)
