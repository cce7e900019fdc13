import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kantsc.core import ConfigError, DataError, NumericError, Param
from kantsc.data import Dataset
from kantsc.kan import KanLayer
from kantsc.models import Model, ModelConfig, build_model
from kantsc.train import (AdamW, TrainConfig, batches, cross_entropy_loss, default_batch_size, kan_regularization,
                          lr_at, train)


def toy_dataset(n=20, d=8, seed=0, name="toy"):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = rng.normal(size=(n, d)) + np.where(y[:, None] == 1, 1.5, -1.5)
    return Dataset(name, x, y, x.copy(), y.copy(), {0: 0, 1: 1})


def test_cross_entropy_examples():
    loss, grad = cross_entropy_loss(np.array([[0.0, 0.0]]), np.array([0]))
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(grad, [[-0.5, 0.5]])
    loss, _ = cross_entropy_loss(np.array([[100.0, 0.0]]), np.array([0]))
    assert loss < 1e-10
    a, _ = cross_entropy_loss(np.array([[1.0, 2.0]]), np.array([0]))
    b, _ = cross_entropy_loss(np.array([[0.3, -1.0]]), np.array([1]))
    both, _ = cross_entropy_loss(np.array([[1.0, 2.0], [0.3, -1.0]]), np.array([0, 1]))
    assert both == pytest.approx((a + b) / 2, abs=1e-15)


def test_cross_entropy_is_stable_for_huge_logits():
    loss, grad = cross_entropy_loss(np.array([[1000.0, -1000.0]]), np.array([1]))
    assert loss == pytest.approx(2000.0)
    np.testing.assert_allclose(grad, [[1.0, -1.0]])


def test_cross_entropy_errors():
    with pytest.raises(DataError):
        cross_entropy_loss(np.zeros((0, 2)), np.zeros(0, dtype=int))
    with pytest.raises(DataError):
        cross_entropy_loss(np.zeros((1, 2)), np.array([2]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(2, 6))
def test_cross_entropy_gradient(seed, n, m):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, m)) * 3
    y = rng.integers(0, m, n)
    _, g = cross_entropy_loss(z, y)
    h = 1e-6
    for i in range(n):
        for j in range(m):
            zp, zm = z.copy(), z.copy()
            zp[i, j] += h
            zm[i, j] -= h
            num = (cross_entropy_loss(zp, y)[0] - cross_entropy_loss(zm, y)[0]) / (2 * h)
            assert abs(num - g[i, j]) <= 1e-6 * max(abs(num), abs(g[i, j]), 1e-3)


def _kan_model(d_in, d_out, rng):
    return Model([KanLayer(d_in, d_out, rng=rng)])


def test_regularization_zero_coefficients():
    model = _kan_model(3, 2, np.random.default_rng(0))
    assert kan_regularization(model, 0.0, 0.0) == 0.0
    assert not model.layers[0].w_spline.grad.any()


def test_regularization_entropy_examples():
    rng = np.random.default_rng(0)
    one = _kan_model(1, 1, rng)
    assert kan_regularization(one, 0.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    two = _kan_model(2, 1, rng)
    two.layers[0].w_spline.value[...] = 0.3
    assert kan_regularization(two, 0.0, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    zero = _kan_model(2, 2, rng)
    zero.layers[0].w_spline.value[...] = 0.0
    assert kan_regularization(zero, 1.0, 1.0) == 0.0


def test_regularization_l1_value():
    model = _kan_model(2, 3, np.random.default_rng(1))
    w = model.layers[0].w_spline.value
    assert kan_regularization(model, 2.0, 0.0) == pytest.approx(2.0 * np.abs(w).mean(axis=-1).sum())


def test_regularization_skips_mlp_layers():
    assert kan_regularization(build_model(ModelConfig("mlp1", 4, 2)), 1.0, 1.0) == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_regularization_gradient(seed):
    rng = np.random.default_rng(seed)
    model = _kan_model(3, 2, rng)
    w = model.layers[0].w_spline
    # keep weights away from zero, where |w| is not differentiable
    w.value[...] = rng.choice([-1, 1], w.value.shape) * rng.uniform(0.05, 1.0, w.value.shape)
    w.zero_grad()
    kan_regularization(model, 0.3, 0.7)
    analytic = w.grad.copy()
    h = 1e-6
    for idx in np.ndindex(*w.value.shape):
        orig = w.value[idx]
        w.value[idx] = orig + h
        fp = kan_regularization(model, 0.3, 0.7)
        w.value[idx] = orig - h
        fm = kan_regularization(model, 0.3, 0.7)
        w.value[idx] = orig
        num = (fp - fm) / (2 * h)
        assert abs(num - analytic[idx]) <= 1e-4 * max(abs(num), abs(analytic[idx]), 1e-6)


def test_adamw_pure_decay_step():
    p = Param("w", np.array([1.0]))
    opt = AdamW([p], lr=0.01, weight_decay=0.01)
    opt.step()
    assert p.value[0] == pytest.approx(0.9999, abs=1e-15)
    assert opt.m[0][0] == 0 and opt.v[0][0] == 0


def test_adamw_first_step_is_signed():
    p = Param("w", np.array([0.0, 0.0, 0.0]))
    p.grad[...] = [3.0, -0.2, 1e-3]
    AdamW([p], lr=0.01, weight_decay=0.0).step()
    np.testing.assert_allclose(p.value, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_adamw_fixed_point():
    p = Param("w", np.array([0.7, -2.0]))
    opt = AdamW([p], lr=0.01, weight_decay=0.0)
    for _ in range(5):
        opt.step()
    np.testing.assert_array_equal(p.value, [0.7, -2.0])


def test_adamw_descends_quadratic_bowl():
    rng = np.random.default_rng(0)
    for _ in range(10):
        A = np.diag(rng.uniform(0.5, 3.0, 4))
        p = Param("w", rng.normal(size=4))
        loss = lambda: 0.5 * p.value @ A @ p.value
        before = loss()
        p.grad[...] = A @ p.value
        AdamW([p], lr=1e-3, weight_decay=0.0).step()
        assert loss() < before


def test_lr_schedule():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == 1e-2
    assert lr_at(24, cfg) == 1e-2
    assert lr_at(25, cfg) == pytest.approx(9e-3, rel=1e-15)
    assert lr_at(50, cfg) == pytest.approx(8.1e-3, rel=1e-15)
    lrs = [lr_at(e, cfg) for e in range(1000)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert len(set(lrs)) == 40


def test_config_validation():
    for bad in ({"epochs": -1}, {"lr0": 0.0}, {"lr_decay": 1.5}, {"decay_every": 0}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_batching():
    assert default_batch_size(30) == 8
    assert default_batch_size(1000) == 32
    assert default_batch_size(3) == 2
    sizes = [len(b) for b in batches(9, 4, np.random.default_rng(0))]
    assert sizes == [4, 4]  # trailing single sample dropped
    idx = np.concatenate(list(batches(12, 5, np.random.default_rng(0))))
    assert sorted(idx) == list(range(12))


def test_zero_epochs_is_identity():
    model = build_model(ModelConfig("kan", 8, 2, seed=3))
    before = [p.value.copy() for p in model.params()]
    _, hist = train(model, toy_dataset(), TrainConfig(epochs=0))
    assert len(hist) == 0
    assert all(np.array_equal(a, p.value) for a, p in zip(before, model.params()))


def test_separable_toy_set():
    model, hist = train(build_model(ModelConfig("mlp1", 8, 2, seed=0)), toy_dataset(), TrainConfig(epochs=200))
    assert hist.train_acc[-1] == 1.0
    assert len(hist) == 200 and len(hist.lr) == 200
    assert not model.train


def test_training_is_bitwise_reproducible():
    runs = []
    for _ in range(2):
        model, hist = train(build_model(ModelConfig("kan", 8, 2, seed=5)), toy_dataset(), TrainConfig(epochs=5, seed=5))
        runs.append((np.concatenate([p.value.ravel() for p in model.params()]), hist.train_loss))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]


def test_nan_loss_is_a_numeric_error():
    model = build_model(ModelConfig("mlp1", 8, 2))
    model.params()[-2].value[0, 0] = np.nan  # output layer, where no ReLU can mask it
    with pytest.raises(NumericError):
        train(model, toy_dataset(), TrainConfig(epochs=1))


def test_eval_every_records_nan_between_evaluations():
    _, hist = train(build_model(ModelConfig("mlp1", 8, 2)), toy_dataset(), TrainConfig(epochs=6, eval_every=4))
    assert [math.isnan(a) for a in hist.test_acc] == [True, True, True, False, True, False]
