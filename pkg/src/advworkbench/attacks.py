"""FGSM, the Carlini-Wagner L2 attack, and epsilon sweeps over a test set.

All adversarial images stay inside the pixel box [0, 1].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import ShapeError, WorkbenchError
from .metrics import SweepRecord, topk_error_from_logits
from .models import forward, forward_logits, input_gradient
from .train import AdamState, adam_step

logger = logging.getLogger(__name__)

FGSM_EPSILONS = tuple(round(0.01 * i, 2) for i in range(1, 11))
DISTILL_EPSILONS = (0.0, 0.007, 0.01, 0.02, 0.03, 0.05, 0.10, 0.20, 0.30)

# Fixed chunking keeps results independent of how callers batch their data.
CHUNK = 256


@dataclass(frozen=True)
class FgsmConfig:
    epsilon: float
    temperature: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class CwConfig:
    c: float = 1.0
    kappa: float = 0.0
    max_iterations: int = 500
    step_size: float = 0.01
    target: Optional[int] = None  # None = untargeted
    epsilon_cap: Optional[float] = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.epsilon_cap is not None and not 0.0 <= self.epsilon_cap <= 1.0:
            raise ValueError("epsilon_cap must lie in [0, 1]")


@dataclass(frozen=True)
class AttackResult:
    adversarial: np.ndarray
    success: np.ndarray
    l2: np.ndarray
    linf: np.ndarray
    iterations: int

    @property
    def success_rate(self):
        return float(self.success.mean()) if len(self.success) else 0.0


def _check_batch(model, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if x.shape[1:] != model.spec.input_shape or len(x) != len(y):
        raise ShapeError(f"batch {list(x.shape)} with {len(y)} labels does not fit model input "
                         f"{list(model.spec.input_shape)}")
    return x, y


def _norms(delta):
    flat = delta.reshape(len(delta), -1)
    return np.sqrt((flat * flat).sum(axis=1)), np.abs(flat).max(axis=1, initial=0.0)


def _succeeded(logits, y, target):
    pred = logits.argmax(axis=1)
    return pred == target if target is not None else pred != y


def fgsm_attack(model, x, y_true, cfg):
    """x_adv = clip(x + epsilon * sign(grad_x loss), 0, 1), with sign(0) = 0."""
    x, y = _check_batch(model, x, y_true)
    adv = np.empty_like(x)
    for s in range(0, len(x), CHUNK):
        g = input_gradient(model, x[s:s + CHUNK], y[s:s + CHUNK], cfg.temperature)
        adv[s:s + CHUNK] = np.clip(x[s:s + CHUNK] + cfg.epsilon * np.sign(g), 0.0, 1.0)
    l2, linf = _norms(adv - x)
    success = _succeeded(forward_logits(model, adv), y, None)
    return AttackResult(adv, success, l2, linf, 1)


def _margin(logits, y, kappa, target):
    """CW margin loss and its gradient with respect to the logits.

    Untargeted: max(Z_y - max_{i != y} Z_i, -kappa).
    Targeted at t: max(max_{i != t} Z_i - Z_t, -kappa).
    """
    rows = np.arange(len(logits))
    anchor = y if target is None else np.full(len(logits), target)
    others = logits.copy()
    others[rows, anchor] = -np.inf
    rival = others.argmax(axis=1)
    m = logits[rows, anchor] - logits[rows, rival]
    if target is not None:
        m = -m
    f = np.maximum(m, -kappa)
    active = (m > -kappa).astype(np.float64)
    sign = 1.0 if target is None else -1.0
    g = np.zeros_like(logits)
    g[rows, anchor] = sign * active
    g[rows, rival] = -sign * active
    return f, g


def _cw_optimize(model, x, y, cfg):
    """Adam on delta for ||delta||_2^2 + c * f(x + delta), projecting x + delta onto [0, 1].

    Keeps, per item, the successful iterate with the lowest objective; items
    that never succeed return their final iterate.
    """
    delta = np.zeros_like(x)
    adam = AdamState(lr=cfg.step_size, beta2=0.999)
    best = np.zeros_like(x)
    best_obj = np.full(len(x), np.inf)
    axes = tuple(range(1, x.ndim))
    for it in range(cfg.max_iterations + 1):
        xt = ad.Tensor(x + delta, requires_grad=True)
        logits = forward(model, xt)
        f, gz = _margin(logits.data, y, cfg.kappa, cfg.target)
        obj = (delta * delta).sum(axis=axes) + cfg.c * f
        better = _succeeded(logits.data, y, cfg.target) & (obj < best_obj)
        best[better] = delta[better]
        best_obj[better] = obj[better]
        if it == cfg.max_iterations:
            break
        (gx,) = ad.grad(ad.tsum(ad.mul(logits, ad.Tensor(gz))), [xt])
        stepped, adam = adam_step(adam, {"delta": delta}, {"delta": 2.0 * delta + cfg.c * gx})
        delta = np.clip(x + stepped["delta"], 0.0, 1.0) - x
    found = np.isfinite(best_obj)
    out = np.where(found.reshape((-1,) + (1,) * (x.ndim - 1)), best, delta)
    return out


def _finish(model, x, y, delta, cap, target, iterations):
    if cap is not None:
        delta = np.clip(delta, -cap, cap)
    adv = np.clip(x + delta, 0.0, 1.0)
    l2, linf = _norms(adv - x)
    success = _succeeded(forward_logits(model, adv), y, target)
    return AttackResult(adv, success, l2, linf, iterations)


def cw_deltas(model, x, y, cfg):
    x, y = _check_batch(model, x, y)
    if cfg.target is not None and not 0 <= cfg.target < model.spec.num_classes:
        raise ValueError(f"target class {cfg.target} out of range")
    parts = [_cw_optimize(model, x[s:s + CHUNK], y[s:s + CHUNK], cfg) for s in range(0, len(x), CHUNK)]
    return np.concatenate(parts) if parts else np.zeros_like(x)


def cw_attack(model, x, y_true, cfg):
    """Carlini-Wagner L2 attack; success=False marks items that never crossed (not an error)."""
    x, y = _check_batch(model, x, y_true)
    delta = cw_deltas(model, x, y, cfg)
    return _finish(model, x, y, delta, cfg.epsilon_cap, cfg.target, cfg.max_iterations)


def _record(model, ds, result, eps, kind):
    logits = forward_logits(model, result.adversarial)
    top5 = min(5, ds.num_classes)
    return SweepRecord(float(eps),
                       topk_error_from_logits(logits, ds.labels, 1),
                       topk_error_from_logits(logits, ds.labels, top5),
                       float(result.l2.mean()) if len(result.l2) else 0.0,
                       result.success_rate,
                       kind)


def epsilon_sweep(model, test, attack="fgsm", epsilons=FGSM_EPSILONS, temperature=1.0, cw=None):
    """Attack the whole test set at each epsilon and record top-1/top-5 error.

    For ``"cw"`` the epsilon is the post-hoc L-infinity cap on the CW
    perturbation; the underlying optimisation does not depend on the cap,
    so it runs once and each cap is applied to its result.
    """
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ValueError("epsilon list is empty")
    for e in epsilons:
        if not 0.0 <= e <= 1.0:
            raise ValueError(f"epsilon {e} outside [0, 1]")
    if attack not in ("fgsm", "cw"):
        raise ValueError(f"unknown attack {attack!r}")
    records = []
    deltas = None
    for eps in epsilons:
        try:
            if attack == "fgsm":
                result = fgsm_attack(model, test.images, test.labels, FgsmConfig(eps, temperature))
            else:
                cfg = cw or CwConfig()
                if deltas is None:
                    deltas = cw_deltas(model, test.images, test.labels, cfg)
                result = _finish(model, test.images, test.labels, deltas, eps, cfg.target, cfg.max_iterations)
        except WorkbenchError as err:
            raise type(err)(f"epsilon={eps}: {err}") from err
        records.append(_record(model, test, result, eps, attack))
        logger.info("%s eps=%.4f top1=%.4f top5=%.4f", attack, eps, records[-1].top1_error, records[-1].top5_error)
    return records
