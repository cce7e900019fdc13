"""Finite-difference gradient checks over every layer type and the full models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CheckReport, Layer, grad_check
from .kan import BatchNorm1d, KanLayer, SplineSpec
from .mlp import Dropout, Linear, ReLU
from .models import ModelConfig, build_model

KINK_MARGIN = 1e-3


@dataclass
class CheckResult:
    name: str
    seed: int
    report: CheckReport

    @property
    def passed(self) -> bool:
        return self.report.passed


def sample_inputs(layer: Layer, shape, rng: np.random.Generator, low=-0.9, high=0.9,
                  margin: float = KINK_MARGIN, max_tries: int = 1000) -> np.ndarray:
    """Uniform inputs with rows resampled until they sit away from kinks and knots."""
    x = rng.uniform(low, high, shape)
    for _ in range(max_tries):
        bad = layer.near_kink(x, margin)
        if not bad.any():
            return x
        x[bad] = rng.uniform(low, high, (int(bad.sum()), shape[1]))
    raise RuntimeError("could not draw inputs away from non-smooth points")


def _randomize_bn(bn: BatchNorm1d, rng) -> None:
    bn.running_mean[...] = rng.uniform(-0.2, 0.2, bn.in_dim)
    bn.running_var[...] = rng.uniform(0.5, 1.5, bn.in_dim)
    bn.gamma.value[...] = rng.uniform(0.5, 1.5, bn.in_dim)
    bn.beta.value[...] = rng.uniform(-0.1, 0.1, bn.in_dim)


def _cases(seed: int):
    rng = np.random.default_rng(seed)

    lin = Linear(5, 4, rng=rng)
    yield "linear", lin, sample_inputs(lin, (6, 5), rng), {}

    relu = ReLU()
    yield "relu", relu, sample_inputs(relu, (6, 5), rng, -1.0, 1.0), {}

    drop = Dropout(0.1, rng=rng)
    drop.set_train(False)
    yield "dropout-off", drop, rng.uniform(-1, 1, (6, 5)), {}

    bn = BatchNorm1d(5)
    _randomize_bn(bn, rng)
    bn.set_train(False)
    yield "batchnorm-frozen", bn, rng.uniform(-1, 1, (6, 5)), {}

    for g in (1, 5, 50):
        kan = KanLayer(4, 3, SplineSpec(g, 3), rng=rng)
        kan.w_spline.value[...] = rng.uniform(-0.5, 0.5, kan.w_spline.value.shape)
        kan.spline_scale.value[...] = rng.uniform(0.5, 1.5, kan.spline_scale.value.shape)
        _randomize_bn(kan.bn, rng)
        kan.set_train(False)
        # keep 5% of a grid step clear of knots: basis values there fall below ~1e-5
        # and finite-difference roundoff swamps the weight gradients
        x = sample_inputs(kan, (5, 4), rng, margin=max(KINK_MARGIN, 0.05 * kan.spec.step))
        yield f"kan-G{g}", kan, x, {}

    for arch in ("KAN", "MLP_I"):
        model = build_model(ModelConfig(arch, d=6, m=3, seed=seed))
        model.set_train(False)
        for layer in model.layers:
            if isinstance(layer, KanLayer):
                _randomize_bn(layer.bn, rng)
        # hidden KAN inputs cannot all be kept clear of knots, so use a larger step
        # here to push roundoff down; G=5 keeps the truncation error small
        yield f"model-{arch}", model, sample_inputs(model, (4, 6), rng), {"max_entries": 60, "epsilon": 1e-4}


def run_suite(seeds=range(10), epsilon: float = 1e-5, tolerance: float = 1e-4) -> list[CheckResult]:
    results = []
    for seed in seeds:
        for name, layer, x, kw in _cases(seed):
            kw = {"epsilon": epsilon, **kw}
            rep = grad_check(layer, x, tolerance=tolerance, rng=np.random.default_rng(seed), **kw)
            results.append(CheckResult(name, seed, rep))
    return results
