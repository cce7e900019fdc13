"""L-infinity PGD attacks, attack success rate and empirical local Lipschitz estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ConfigError, DataError, as_tensor
from .models import Model
from .train import cross_entropy_loss

PAPER_EPS = (0.05, 0.1, 0.25, 0.5)


@dataclass
class AttackConfig:
    eps: float
    alpha: float | None = None  # None -> 0.01 * eps
    iters: int = 100
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.eps < 0:
            raise ConfigError("eps must be >= 0")
        if self.alpha is None:
            self.alpha = 0.01 * self.eps
        if self.eps > 0 and self.alpha <= 0:
            raise ConfigError("alpha must be positive when eps > 0")
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")


@dataclass
class AttackReport:
    eps: float
    orig_pred: np.ndarray
    adv_pred: np.ndarray
    labels: np.ndarray
    success: np.ndarray
    linf: np.ndarray
    denominator: str = "correct"

    @property
    def n_eval(self) -> int:
        return int(len(self.labels))

    @property
    def n_correct_before(self) -> int:
        return int(np.sum(self.orig_pred == self.labels))

    @property
    def n_success(self) -> int:
        return int(np.sum(self.success))

    @property
    def undefined(self) -> bool:
        return self.denominator == "correct" and self.n_correct_before == 0

    @property
    def asr(self) -> float:
        denom = self.n_correct_before if self.denominator == "correct" else self.n_eval
        return float("nan") if denom == 0 else self.n_success / denom

    def row(self, dataset: str = "", model: str = "") -> dict:
        return {"dataset": dataset, "model": model, "eps": self.eps, "n_eval": self.n_eval,
                "n_correct_before": self.n_correct_before, "n_success": self.n_success, "asr": self.asr}


def pgd_attack(model: Model, x, y, cfg: AttackConfig, callback: Callable[[int, np.ndarray], None] | None = None,
               chunk: int = 1024) -> np.ndarray:
    """Untargeted signed-gradient ascent on cross-entropy, clipped to the eps-box around ``x``.

    ``callback(t, x_adv)`` is invoked after every iteration. Parameters and
    parameter gradients are left untouched.
    """
    x = as_tensor(x)
    y = np.asarray(y, dtype=np.int64)
    if cfg.eps == 0 or len(x) == 0:
        return x.copy()
    lo, hi = x - cfg.eps, x + cfg.eps
    xa = x.copy()
    if cfg.random_start:
        xa += np.random.default_rng(cfg.seed).uniform(-cfg.eps, cfg.eps, x.shape)
    mode = model.train
    model.set_train(False)
    try:
        for t in range(cfg.iters):
            for i in range(0, len(x), chunk):
                sl = slice(i, i + chunk)
                logits = model.forward(xa[sl])
                _, g = cross_entropy_loss(logits, y[sl])
                gx = model.backward(g, param_grads=False)
                xa[sl] = np.clip(xa[sl] + cfg.alpha * np.sign(gx), lo[sl], hi[sl])
            if callback is not None:
                callback(t, xa)
    finally:
        model.set_train(mode)
    return xa


def attack_success_rate(model: Model, dataset, cfg: AttackConfig,
                        denominator: str = "correct") -> tuple[float, AttackReport]:
    """ASR over the test split: flipped initially-correct samples / initially-correct samples.

    ``denominator="all"`` divides by every evaluated sample instead. An empty
    denominator yields NaN with ``report.undefined`` set.
    """
    if denominator not in ("correct", "all"):
        raise ConfigError("denominator must be 'correct' or 'all'")
    x, y = dataset.test_arrays() if hasattr(dataset, "test_arrays") else dataset
    x, y = as_tensor(x), np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise DataError("attack on an empty test set")
    orig = model.predict(x)
    xa = pgd_attack(model, x, y, cfg)
    adv = model.predict(xa)
    success = (orig == y) & (adv != y)
    if denominator == "all":
        success = adv != y
    report = AttackReport(eps=cfg.eps, orig_pred=orig, adv_pred=adv, labels=y, success=success,
                          linf=np.abs(xa - x).max(axis=1), denominator=denominator)
    return report.asr, report


@dataclass
class LipschitzConfig:
    radius: float = 0.5
    n_starts: int = 8
    ascent_steps: int = 20
    ascent_lr: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError("radius must be positive")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be >= 1")
        if self.ascent_steps < 0:
            raise ConfigError("ascent_steps must be >= 0")


def _point_rng(cfg: LipschitzConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))


def _lipschitz_points(model: Model, x0: np.ndarray, indices, cfg: LipschitzConfig) -> np.ndarray:
    """Max difference quotient found around each row of ``x0`` by projected pair ascent."""
    P, d = x0.shape
    S, r = cfg.n_starts, cfg.radius
    rngs = [_point_rng(cfg, int(i)) for i in indices]
    lo = (x0 - r)[:, None, :]
    hi = (x0 + r)[:, None, :]
    x1 = np.stack([x0[p] + rngs[p].uniform(-r, r, (S, d)) for p in range(P)])
    x2 = np.stack([x0[p] + rngs[p].uniform(-r, r, (S, d)) for p in range(P)])
    best = np.zeros(P)

    for step in range(cfg.ascent_steps + 1):
        delta = x1 - x2
        dist = np.linalg.norm(delta, axis=-1)
        for p, s in zip(*np.nonzero(dist < 1e-9)):
            x2[p, s] = x0[p] + rngs[p].uniform(-r, r, d)
        delta = x1 - x2
        dist = np.linalg.norm(delta, axis=-1)

        out = model.forward(np.concatenate([x1.reshape(P * S, d), x2.reshape(P * S, d)]))
        f1, f2 = out[:P * S], out[P * S:]
        diff = (f1 - f2).reshape(P, S, -1)
        num = np.linalg.norm(diff, axis=-1)
        q = num / dist
        best = np.maximum(best, q.max(axis=1))
        if step == cfg.ascent_steps:
            break

        # d q / d f1 = D / (|D| |dx|); explicit x-terms come from the denominator
        up = np.where(num[..., None] > 0, diff / np.maximum(num, 1e-300)[..., None], 0.0) / dist[..., None]
        up = up.reshape(P * S, -1)
        g = model.backward(np.concatenate([up, -up]), param_grads=False)
        g1 = g[:P * S].reshape(P, S, d) - (q / dist**2)[..., None] * delta
        g2 = -g[P * S:].reshape(P, S, d) + (q / dist**2)[..., None] * delta
        scale = np.maximum(np.abs(g1).max(axis=-1), np.abs(g2).max(axis=-1))
        scale = np.where(scale > 0, scale, 1.0)[..., None]
        x1 = np.clip(x1 + cfg.ascent_lr * r * g1 / scale, lo, hi)
        x2 = np.clip(x2 + cfg.ascent_lr * r * g2 / scale, lo, hi)
    return best


def lipschitz_estimate(model: Model, x0, cfg: LipschitzConfig, index: int = 0) -> float:
    """Empirical lower bound of the local Lipschitz constant of ``model`` at ``x0``.

    Pairs are drawn in the L-infinity ball of ``cfg.radius`` and refined by
    projected ascent on ``|f(x1) - f(x2)|_2 / |x1 - x2|_2``; the largest
    quotient seen is returned.
    """
    x0 = as_tensor(x0).reshape(1, -1)
    mode = model.train
    model.set_train(False)
    try:
        return float(_lipschitz_points(model, x0, [index], cfg)[0])
    finally:
        model.set_train(mode)


@dataclass
class LipschitzSummary:
    indices: np.ndarray
    estimates: np.ndarray
    median: float = field(init=False)
    q1: float = field(init=False)
    q3: float = field(init=False)

    def __post_init__(self):
        self.q1, self.median, self.q3 = (float(v) for v in np.quantile(self.estimates, [0.25, 0.5, 0.75]))


def lipschitz_dataset_summary(model: Model, dataset, cfg: LipschitzConfig, max_points: int = 256,
                              chunk: int = 64) -> LipschitzSummary:
    """Per-sample estimates over the test split (seeded subsample of at most ``max_points``)."""
    x, _ = dataset.test_arrays() if hasattr(dataset, "test_arrays") else dataset
    x = as_tensor(x)
    if len(x) == 0:
        raise DataError("Lipschitz summary of an empty test set")
    idx = np.arange(len(x))
    if len(x) > max_points:
        idx = np.sort(np.random.default_rng(cfg.seed).choice(len(x), max_points, replace=False))
    mode = model.train
    model.set_train(False)
    try:
        est = np.concatenate([_lipschitz_points(model, x[idx[i:i + chunk]], idx[i:i + chunk], cfg)
                              for i in range(0, len(idx), chunk)])
    finally:
        model.set_train(mode)
    return LipschitzSummary(indices=idx, estimates=est)
