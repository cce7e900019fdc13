import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kantsc.core import ConfigError, DataError
from kantsc.mlp import Linear, ReLU
from kantsc.models import Model, ModelConfig, build_model
from kantsc.robust import (AttackConfig, LipschitzConfig, attack_success_rate, lipschitz_dataset_summary,
                           lipschitz_estimate, pgd_attack)


def linear_model(W, b=None):
    return Model([Linear.from_weights(W, b)])


def logistic_1d(w=2.0):
    return linear_model(np.array([[w], [-w]]))


@pytest.mark.parametrize("eps,expected", [(0.25, 0.25), (1.0, -0.28125), (0.78125, -0.28125), (0.5, 0.0)])
def test_pgd_closed_form_path(eps, expected):
    # x = 0.5, alpha = 2**-7, 100 steps: x_adv = x - min(alpha * iters, eps), exact in binary
    cfg = AttackConfig(eps, alpha=2.0**-7, iters=100)
    trace = []
    xa = pgd_attack(logistic_1d(), np.array([[0.5]]), np.array([0]), cfg,
                    callback=lambda t, x: trace.append(x[0, 0]))
    assert xa[0, 0] == expected
    assert trace == [max(0.5 - (t + 1) * 2.0**-7, 0.5 - eps) for t in range(100)]


def test_pgd_eps_zero_returns_input():
    x = np.random.default_rng(0).normal(size=(4, 6))
    model = build_model(ModelConfig("mlp1", 6, 2))
    np.testing.assert_array_equal(pgd_attack(model, x, np.zeros(4, dtype=int), AttackConfig(0.0)), x)


def test_attack_config_defaults():
    cfg = AttackConfig(0.5)
    assert cfg.alpha == 0.005 and cfg.iters == 100 and not cfg.random_start
    with pytest.raises(ConfigError):
        AttackConfig(-0.1)
    with pytest.raises(ConfigError):
        AttackConfig(0.1, iters=0)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["kan", "mlp1", "mlp_kan"]), st.sampled_from([0.05, 0.1, 0.25, 0.5]),
       st.integers(0, 1000), st.booleans())
def test_ball_containment_every_iteration(arch, eps, seed, random_start):
    rng = np.random.default_rng(seed)
    model = build_model(ModelConfig(arch, 6, 3, seed=seed))
    model.set_train(False)
    x = rng.normal(size=(20, 6))
    y = rng.integers(0, 3, 20)
    worst = []
    pgd_attack(model, x, y, AttackConfig(eps, iters=10, random_start=random_start, seed=seed),
               callback=lambda t, xa: worst.append(np.abs(xa - x).max()))
    assert len(worst) == 10 and max(worst) <= eps + 1e-12


def test_attack_leaves_parameters_untouched():
    model = build_model(ModelConfig("kan", 6, 3))
    model.set_train(False)
    before = model.checksum()
    values = [p.value.copy() for p in model.params()]
    buffers = {k: v.copy() for k, v in model.buffers().items()}
    x = np.random.default_rng(0).normal(size=(8, 6))
    pgd_attack(model, x, np.zeros(8, dtype=int), AttackConfig(0.3, iters=5))
    assert model.checksum() == before
    assert all(np.array_equal(a, p.value) for a, p in zip(values, model.params()))
    assert all(np.array_equal(buffers[k], v) for k, v in model.buffers().items())
    assert all(not p.grad.any() for p in model.params())


def test_asr_undefined_when_nothing_correct():
    model = linear_model(np.zeros((2, 3)), np.array([1.0, 0.0]))  # always predicts class 0
    asr, rep = attack_success_rate(model, (np.zeros((4, 3)), np.ones(4, dtype=int)), AttackConfig(0.1, iters=2))
    assert np.isnan(asr) and rep.undefined


def test_asr_perfect_model_eps_zero():
    model = logistic_1d()
    x = np.array([[1.0], [2.0], [-1.0]])
    y = np.array([0, 0, 1])
    asr, rep = attack_success_rate(model, (x, y), AttackConfig(0.0))
    assert asr == 0.0 and rep.n_correct_before == 3


def test_asr_margin_crossing():
    # margin gamma = 0.3 from the boundary at 0; the path moves 0.5 toward it
    model = logistic_1d()
    x = np.array([[0.3], [-0.3]])
    y = np.array([0, 1])
    asr, rep = attack_success_rate(model, (x, y), AttackConfig(0.5, alpha=2.0**-6, iters=100))
    assert asr == 1.0
    np.testing.assert_array_equal(rep.adv_pred, [1, 0])
    assert np.all(rep.linf <= 0.5)
    asr_small, _ = attack_success_rate(model, (x, y), AttackConfig(0.25, alpha=2.0**-6, iters=100))
    assert asr_small == 0.0


def test_asr_denominators():
    model = logistic_1d()
    x = np.array([[0.3], [-0.3], [2.0], [1.0]])
    y = np.array([0, 1, 0, 1])  # last sample wrong from the start
    cfg = AttackConfig(0.5, alpha=2.0**-6, iters=100)
    asr, rep = attack_success_rate(model, (x, y), cfg)
    assert (rep.n_correct_before, rep.n_success, asr) == (3, 2, 2 / 3)
    asr_all, _ = attack_success_rate(model, (x, y), cfg, denominator="all")
    assert asr_all == 3 / 4
    with pytest.raises(ConfigError):
        attack_success_rate(model, (x, y), cfg, denominator="some")
    with pytest.raises(DataError):
        attack_success_rate(model, (np.zeros((0, 1)), np.zeros(0, dtype=int)), cfg)


def test_lipschitz_identity_and_scaling():
    x0 = np.random.default_rng(0).normal(size=7)
    cfg = LipschitzConfig()
    assert abs(lipschitz_estimate(linear_model(np.eye(7)), x0, cfg) - 1) <= 1e-6
    est3 = lipschitz_estimate(linear_model(3 * np.eye(7)), x0, cfg)
    assert 3 - 1e-4 <= est3 <= 3 + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_lipschitz_lower_bounds_spectral_norm(seed, d):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(3, d))
    model = linear_model(W, rng.normal(size=3))
    est = lipschitz_estimate(model, rng.normal(size=d), LipschitzConfig(n_starts=4, ascent_steps=10, seed=seed))
    sigma = np.linalg.norm(W, 2)
    assert 0 <= est <= sigma * (1 + 1e-9)


def test_lipschitz_homogeneity():
    rng = np.random.default_rng(1)
    W = rng.normal(size=(3, 5))
    x0 = rng.normal(size=5)
    cfg = LipschitzConfig(n_starts=3, ascent_steps=5)
    a = lipschitz_estimate(linear_model(W), x0, cfg)
    b = lipschitz_estimate(linear_model(-2.5 * W), x0, cfg)
    assert b == pytest.approx(2.5 * a, rel=1e-9)


def test_lipschitz_relu_kink_approaches_weight_norm():
    w = np.array([[2.0, -1.0]])
    model = Model([Linear.from_weights(w), ReLU()])
    x0 = np.zeros(2)  # w.x0 = 0 is the kink
    cfg = LipschitzConfig(radius=0.5, n_starts=64, ascent_steps=30)
    est = lipschitz_estimate(model, x0, cfg)
    assert np.linalg.norm(w) * 0.99 <= est <= np.linalg.norm(w) * (1 + 1e-9)


def test_lipschitz_summary_is_deterministic_and_subsampled():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(300, 5))
    model = build_model(ModelConfig("mlp1", 5, 2))
    cfg = LipschitzConfig(n_starts=2, ascent_steps=2, seed=4)
    a = lipschitz_dataset_summary(model, (x, np.zeros(300, dtype=int)), cfg)
    b = lipschitz_dataset_summary(model, (x, np.zeros(300, dtype=int)), cfg, chunk=7)
    assert len(a.estimates) == 256 and len(set(a.indices)) == 256
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_allclose(a.estimates, b.estimates, rtol=1e-12)
    assert a.q1 <= a.median <= a.q3


def test_identity_summary_is_one():
    x = np.random.default_rng(0).normal(size=(10, 4))
    s = lipschitz_dataset_summary(linear_model(np.eye(4)), (x, np.zeros(10, dtype=int)), LipschitzConfig())
    np.testing.assert_allclose(s.estimates, 1.0, atol=1e-12)
