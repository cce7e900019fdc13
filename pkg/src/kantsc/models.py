"""The five compared architectures and their ablation variants."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import CapabilityError, ConfigError, DataError, Layer, Param, as_tensor
from .kan import KanLayer, SplineSpec
from .mlp import Dropout, Linear, ReLU

ARCHS = ("KAN", "MLP_I", "MLP_II", "KAN_MLP", "MLP_KAN")

CLI_NAMES = {
    "kan": "KAN",
    "mlp1": "MLP_I",
    "mlp2": "MLP_II",
    "mlp_l": "MLP_II",
    "kan_mlp": "KAN_MLP",
    "mlp_kan": "MLP_KAN",
}
SHORT_NAMES = {"KAN": "kan", "MLP_I": "mlp1", "MLP_II": "mlp2", "KAN_MLP": "kan_mlp", "MLP_KAN": "mlp_kan"}


def resolve_arch(name: str) -> str:
    if name in ARCHS:
        return name
    try:
        return CLI_NAMES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown architecture {name!r}; expected one of {sorted(CLI_NAMES)}") from None


@dataclass
class ModelConfig:
    arch: str
    d: int
    m: int
    grid_size: int = 5
    spline_order: int = 3
    use_base: bool = True
    use_spline: bool = True
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.arch = resolve_arch(self.arch)
        if self.d < 1:
            raise ConfigError(f"series length d must be >= 1, got {self.d}")
        if self.m < 2:
            raise ConfigError(f"class count m must be >= 2, got {self.m}")

    @property
    def widths(self) -> list[int]:
        hidden = 10 * self.d if self.arch == "MLP_II" else self.d
        return [self.d, hidden, 128, self.m]

    @property
    def layer_kinds(self) -> list[str]:
        # KAN_MLP / MLP_KAN split as in the parameter formulas of the comparison table
        return {
            "KAN": ["kan", "kan", "kan"],
            "MLP_I": ["linear", "linear", "linear"],
            "MLP_II": ["linear", "linear", "linear"],
            "KAN_MLP": ["kan", "linear", "linear"],
            "MLP_KAN": ["linear", "kan", "kan"],
        }[self.arch]

    def to_dict(self) -> dict:
        return asdict(self)


class Model(Layer):
    """Sequential composition of layers; parameters are named ``layers.<i>.<local>``."""

    def __init__(self, layers: list[Layer], config: ModelConfig | None = None):
        super().__init__()
        self.layers = list(layers)
        self.config = config
        dims = [l for l in self.layers if l.in_dim is not None]
        self.in_dim = dims[0].in_dim if dims else None
        self.out_dim = dims[-1].out_dim if dims else None
        for i, layer in enumerate(self.layers):
            for p in layer.params():
                p.name = f"layers.{i}.{p.name.split('.', 2)[-1] if p.name.startswith('layers.') else p.name}"

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"layers.{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.buffers().items()}

    def set_train(self, mode: bool) -> None:
        self.train = mode
        for layer in self.layers:
            layer.set_train(mode)

    def forward(self, x):
        x = as_tensor(x)
        if x.ndim != 2 or (self.in_dim is not None and x.shape[1] != self.in_dim):
            raise DataError(f"model expects series of length {self.in_dim}, got shape {list(x.shape)}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad, param_grads=True):
        for layer in reversed(self.layers):
            grad = layer.backward(grad, param_grads)
        return grad

    def predict(self, x, batch_size: int = 1024) -> np.ndarray:
        return np.argmax(self.logits(x, batch_size), axis=1)

    def logits(self, x, batch_size: int = 1024) -> np.ndarray:
        """Eval-mode forward pass in chunks; restores the previous mode."""
        mode = self.train
        self.set_train(False)
        try:
            x = as_tensor(x)
            if len(x) == 0:
                return self.forward(x)
            return np.concatenate([self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])
        finally:
            self.set_train(mode)

    def input_grad(self, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(upstream * f(x))`` w.r.t. ``x`` without touching parameter grads."""
        self.forward(x)
        return self.backward(as_tensor(upstream), param_grads=False)

    def near_kink(self, x, margin):
        x = as_tensor(x)
        hit = np.zeros(len(x), dtype=bool)
        mode = self.train
        self.set_train(False)
        try:
            for layer in self.layers:
                hit |= layer.near_kink(x, margin)
                x = layer.forward(x)
        finally:
            self.set_train(mode)
        return hit

    def checksum(self) -> float:
        return float(sum(np.sum(p.value * (i + 1)) for i, p in enumerate(self.params())))


def build_model(config: ModelConfig) -> Model:
    """Instantiate the layer stack for ``config`` with seeded initialisation."""
    init_ss, drop_ss = np.random.SeedSequence(config.seed).spawn(2)
    init_rng = np.random.default_rng(init_ss)
    drop_rngs = [np.random.default_rng(s) for s in drop_ss.spawn(2)]
    spec = SplineSpec(config.grid_size, config.spline_order)
    widths = config.widths
    layers: list[Layer] = []
    for i, kind in enumerate(config.layer_kinds):
        d_in, d_out = widths[i], widths[i + 1]
        last = i == 2
        if kind == "kan":
            layers.append(KanLayer(d_in, d_out, spec, config.use_base, config.use_spline, rng=init_rng))
        else:
            layers.append(Linear(d_in, d_out, rng=init_rng))
            if not last:
                layers.append(ReLU())
        if not last:
            layers.append(Dropout(config.dropout, rng=drop_rngs[i]))
    return Model(layers, config)


def count_params(model: Layer) -> int:
    return int(sum(p.size for p in model.params()))


def table_param_formula(arch: str, d: int, grid_size: int = 5, spline_order: int = 3) -> float:
    """Approximate parameter count listed in the architecture comparison table."""
    c = 2 + grid_size + spline_order
    return {
        "KAN": c * d**2 + (258 + 128 * (grid_size + spline_order)) * d,
        "MLP_I": d**2 + 131 * d,
        "MLP_II": 10 * d**2 + 1310 * d,
        "KAN_MLP": c * d**2 + 130 * d,
        "MLP_KAN": d**2 + c * 128 * d,
    }[resolve_arch(arch)]


def last_layer_components(model: Model, x) -> tuple[np.ndarray, np.ndarray]:
    """Flattened base and spline addends of the final KAN layer (eval mode)."""
    final = model.layers[-1]
    if not isinstance(final, KanLayer):
        raise CapabilityError("last_layer_components needs a model whose final layer is a KAN layer")
    mode = model.train
    model.set_train(False)
    try:
        h = as_tensor(x)
        for layer in model.layers[:-1]:
            h = layer.forward(h)
        base, spline = final.components(h)
    finally:
        model.set_train(mode)
    return base.ravel(), spline.ravel()
