"""Cross-entropy training with AdamW, step-decayed learning rate and KAN regularisation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ConfigError, DataError, NumericError, Param, as_tensor
from .kan import KanLayer
from .models import Model

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 1000
    lr0: float = 1e-2
    lr_decay: float = 0.9
    decay_every: int = 25
    weight_decay: float = 1e-2
    l1_coeff: float = 0.0
    entropy_coeff: float = 1e-5
    batch_size: int | None = None  # None -> min(32, ceil(n_train / 4))
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.decay_every < 1:
            raise ConfigError("decay_every must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    epoch: list[int] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.epoch)

    @property
    def best_test_acc(self) -> float:
        vals = [a for a in self.test_acc if not math.isnan(a)]
        return max(vals) if vals else float("nan")

    def rows(self):
        return zip(self.epoch, self.lr, self.train_loss, self.train_acc, self.test_acc)


def cross_entropy_loss(logits, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, m = logits.shape
    if n == 0:
        raise DataError("cross-entropy of an empty batch")
    if labels.min() < 0 or labels.max() >= m:
        raise DataError(f"labels must lie in 0..{m - 1}")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsumexp - z[rows, labels]))
    grad = np.exp(z - logsumexp[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


def kan_regularization(model: Model, l1_coeff: float, entropy_coeff: float) -> float:
    """Mean-|w| L1 plus edge-entropy penalty over every KAN layer; adds its gradient to ``w_spline.grad``."""
    total = 0.0
    if l1_coeff == 0.0 and entropy_coeff == 0.0:
        return total
    for layer in model.layers:
        if not isinstance(layer, KanLayer) or layer.w_spline is None:
            continue
        w = layer.w_spline.value
        nb = w.shape[-1]
        absw = np.abs(w)
        a = absw.mean(axis=-1)
        s = a.sum()
        da = np.full_like(a, l1_coeff)
        entropy = 0.0
        if s > 0:
            p = a / s
            pos = p > 0
            logp = np.zeros_like(p)
            logp[pos] = np.log(p[pos])
            entropy = float(-np.sum(p * logp))
            # dH/da_j = -(ln p_j + H) / S; zero-mass edges take the 0 subgradient
            da += entropy_coeff * np.where(pos, -(logp + entropy) / s, 0.0)
        total += l1_coeff * float(s) + entropy_coeff * entropy
        sign = np.sign(w, out=absw)
        sign *= (da / nb)[..., None]
        layer.w_spline.grad += sign
    return total


class AdamW:
    """Adam with decoupled weight decay, one moment pair per parameter."""

    def __init__(self, params: list[Param], lr: float = 1e-2, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 1e-2):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self._scratch = [np.empty_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v, buf in zip(self.params, self.m, self.v, self._scratch):
            g = p.grad
            if self.weight_decay:
                p.value *= 1.0 - self.lr * self.weight_decay
            m *= b1
            np.multiply(g, 1.0 - b1, out=buf)
            m += buf
            v *= b2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - b2
            v += buf
            # buf <- lr * (m / c1) / (sqrt(v / c2) + eps)
            np.multiply(v, 1.0 / c2, out=buf)
            np.sqrt(buf, out=buf)
            buf += self.eps
            np.divide(m, buf, out=buf)
            buf *= self.lr / c1
            p.value -= buf

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def adamw_step(opt: AdamW, lr: float | None = None) -> None:
    if lr is not None:
        opt.lr = lr
    opt.step()


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    return cfg.lr0 * cfg.lr_decay ** (epoch // cfg.decay_every)


def default_batch_size(n_train: int) -> int:
    return max(2, min(32, math.ceil(n_train / 4)))


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled minibatch index arrays; a trailing batch of one sample is dropped (batch norm)."""
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        idx = order[i:i + batch_size]
        if len(idx) >= 2 or n == 1:
            yield idx


def evaluate_accuracy(model: Model, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(model.predict(x) == np.asarray(y)))


def train(model: Model, dataset, cfg: TrainConfig) -> tuple[Model, TrainHistory]:
    """Train ``model`` in place on ``dataset.train`` for ``cfg.epochs`` epochs.

    Test accuracy is recorded every ``cfg.eval_every`` epochs (NaN otherwise)
    and always at the final epoch.
    """
    x_tr, y_tr = dataset.train_arrays()
    x_te, y_te = dataset.test_arrays()
    n = len(y_tr)
    if n == 0:
        raise DataError(f"{dataset.name}: empty training split")
    bs = cfg.batch_size or default_batch_size(n)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    opt = AdamW(model.params(), lr=cfg.lr0, weight_decay=cfg.weight_decay)
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        opt.lr = lr
        model.set_train(True)
        losses, correct, seen = [], 0, 0
        for idx in batches(n, bs, rng):
            xb, yb = x_tr[idx], y_tr[idx]
            opt.zero_grad()
            logits = model.forward(xb)
            loss, grad = cross_entropy_loss(logits, yb)
            model.backward(grad)
            loss += kan_regularization(model, cfg.l1_coeff, cfg.entropy_coeff)
            if not math.isfinite(loss):
                raise NumericError(f"{dataset.name}: non-finite loss at epoch {epoch}")
            opt.step()
            losses.append(loss * len(idx))
            correct += int(np.sum(np.argmax(logits, axis=1) == yb))
            seen += len(idx)
        last = epoch == cfg.epochs - 1
        test_acc = float("nan")
        if cfg.eval_every and ((epoch + 1) % cfg.eval_every == 0 or last):
            test_acc = evaluate_accuracy(model, x_te, y_te)
        history.epoch.append(epoch)
        history.lr.append(lr)
        history.train_loss.append(sum(losses) / max(seen, 1))
        history.train_acc.append(correct / max(seen, 1))
        history.test_acc.append(test_acc)
        if epoch % 100 == 0 or last:
            log.debug("%s epoch %d loss %.4f train %.3f test %.3f", dataset.name, epoch,
                      history.train_loss[-1], history.train_acc[-1], test_acc)
    model.set_train(False)
    return model, history
