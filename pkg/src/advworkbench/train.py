"""Adam, reduce-on-plateau learning-rate scheduling, and the training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DatasetError, NonFiniteGradientError, ShapeError
from .models import forward
from .rng import Xorshift64Star

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """One bias-corrected Adam update.

    Returns ``(new_params, state)``; ``state`` is advanced in place and the
    input parameter arrays are left untouched.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    new = dict(params)
    for name, g in grads.items():
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
        v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        new[name] = params[name] - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return new, state


@dataclass
class PlateauScheduler:
    """Mode "min": cut lr by ``factor`` after more than ``patience`` epochs without improvement."""

    factor: float = 0.1
    patience: int = 3
    min_lr: float = 1e-4
    threshold: float = 1e-8
    best: float = math.inf
    stall: int = 0

    def step(self, val_loss, lr):
        if val_loss < self.best - self.threshold:
            self.best = val_loss
            self.stall = 0
            return lr
        self.stall += 1
        if self.stall > self.patience:
            self.stall = 0
            # never raise lr, even if it started below the floor
            return min(lr, max(lr * self.factor, self.min_lr))
        return lr


def scheduler_step(s, val_loss, current_lr):
    return s.step(val_loss, current_lr)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")


def cross_entropy_loss(temperature):
    def loss_fn(logits, ds, idx):
        return ad.cross_entropy(ad.softmax_with_temperature(logits, temperature), ds.labels[idx])
    return loss_fn


def evaluate_loss(model, ds, loss_fn, batch_size=256):
    """Item-weighted mean of ``loss_fn`` over ``ds`` (no gradients)."""
    total = 0.0
    for start in range(0, len(ds), batch_size):
        idx = np.arange(start, min(start + batch_size, len(ds)))
        total += loss_fn(forward(model, ds.images[idx]), ds, idx).item() * len(idx)
    return total / len(ds)


def train(model, train_ds, val_ds, cfg, loss_fn=None, val_loss_fn=None, scheduler=None):
    """Mini-batch Adam on the mean batch loss; one scheduler step per epoch.

    ``loss_fn(logits, ds, idx)`` returns a scalar Tensor for the rows ``idx``
    of ``ds``; the default is cross-entropy at ``cfg.temperature``.
    Returns ``(trained_model, history)``; history has one entry per epoch in
    ``train_loss``, ``val_loss``, ``train_acc`` and ``lr``.
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise DatasetError("training and validation sets must be nonempty")
    if train_ds.item_shape != model.spec.input_shape:
        raise ShapeError(f"data items {list(train_ds.item_shape)} vs model input {list(model.spec.input_shape)}")
    loss_fn = loss_fn or cross_entropy_loss(cfg.temperature)
    val_loss_fn = val_loss_fn or loss_fn
    scheduler = scheduler or PlateauScheduler()
    adam = AdamState(lr=cfg.lr)
    params = {k: v.copy() for k, v in model.params.items()}
    history = {"train_loss": [], "val_loss": [], "train_acc": [], "lr": []}
    n = len(train_ds)
    for epoch in range(cfg.epochs):
        order = Xorshift64Star(cfg.seed, epoch).permutation(n)
        loss_sum = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            leaves = {k: ad.Tensor(v, requires_grad=True) for k, v in params.items()}
            logits = forward(model, train_ds.images[idx], leaves)
            loss = loss_fn(logits, train_ds, idx)
            grads = ad.backward(loss)
            try:
                params, adam = adam_step(adam, params, {k: grads[t.id] for k, t in leaves.items()})
            except NonFiniteGradientError as err:
                raise NonFiniteGradientError(f"epoch {epoch + 1}, batch {b + 1}: {err}") from err
            loss_sum += loss.item() * len(idx)
            correct += int((logits.data.argmax(axis=1) == train_ds.labels[idx]).sum())
        model = model.with_params(params)
        val_loss = evaluate_loss(model, val_ds, val_loss_fn)
        history["train_loss"].append(loss_sum / n)
        history["val_loss"].append(val_loss)
        history["train_acc"].append(correct / n)
        history["lr"].append(adam.lr)
        logger.info("epoch %d/%d train_loss=%.4f val_loss=%.4f train_acc=%.3f lr=%g",
                    epoch + 1, cfg.epochs, loss_sum / n, val_loss, correct / n, adam.lr)
        adam.lr = scheduler.step(val_loss, adam.lr)
    return model, history
