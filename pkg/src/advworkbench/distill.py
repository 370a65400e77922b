"""Defensive distillation: teacher at temperature T, softened labels, student on the combined loss.

The student objective is

    cross_entropy(softmax(z), y) + lambda * KL(soft_labels || softmax(z / T))

and every evaluation and attack runs against the deployed model at T = 1
unless ``attack_temperature`` says otherwise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attacks import DISTILL_EPSILONS, CwConfig, cw_attack, epsilon_sweep
from .data import default_split, split
from .metrics import accuracy
from .models import ModelSpec, forward_logits, init_params, reference_specs
from .train import TrainConfig, train

logger = logging.getLogger(__name__)


def _default_specs():
    specs = reference_specs()
    return specs["teacher-cnn"], specs["student-cnn"]


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 100.0
    lam: float = 1.0
    teacher_spec: ModelSpec = field(default_factory=lambda: _default_specs()[0])
    student_spec: ModelSpec = field(default_factory=lambda: _default_specs()[1])
    epochs: int = 10
    seed: int = 0
    lr: float = 1e-3
    batch_size: int = 64
    attack_temperature: float = 1.0
    epsilons: tuple = DISTILL_EPSILONS
    cw: CwConfig = field(default_factory=CwConfig)

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.student_spec.param_count() >= self.teacher_spec.param_count():
            raise ValueError("student must have fewer parameters than the teacher")

    def train_config(self, temperature):
        return TrainConfig(self.epochs, self.batch_size, self.lr, temperature, self.seed)


def train_teacher(train_ds, val_ds, cfg):
    """Train the teacher with cross-entropy through softmax at ``cfg.temperature``."""
    teacher = init_params(cfg.teacher_spec, cfg.seed)
    return train(teacher, train_ds, val_ds, cfg.train_config(cfg.temperature))


def soften_labels(teacher, ds, T):
    """Teacher's softmax(logits / T) for every item; rows sum to 1."""
    return ad.softmax_with_temperature(forward_logits(teacher, ds.images), T).data


def distillation_total_loss(student_probs_T, soft_labels, student_probs_1, y_true, lam):
    """Classification loss plus lambda times the distillation loss."""
    ce = ad.cross_entropy(student_probs_1, y_true)
    kl = ad.kl_divergence(soft_labels, student_probs_T)
    return ad.add(ce, ad.scale(kl, lam))


def distillation_loss_fn(soft_labels, T, lam):
    soft = np.asarray(soft_labels)

    def loss_fn(logits, ds, idx):
        return distillation_total_loss(ad.softmax_with_temperature(logits, T), soft[idx],
                                       ad.softmax_with_temperature(logits, 1.0), ds.labels[idx], lam)

    return loss_fn


def train_student(train_ds, val_ds, cfg, soft_train=None, soft_val=None):
    """Student on the distillation loss, or on plain cross-entropy when no soft labels are given."""
    student = init_params(cfg.student_spec, cfg.seed)
    tcfg = cfg.train_config(1.0)
    if soft_train is None:
        return train(student, train_ds, val_ds, tcfg)
    return train(student, train_ds, val_ds, tcfg,
                 loss_fn=distillation_loss_fn(soft_train, cfg.temperature, cfg.lam),
                 val_loss_fn=distillation_loss_fn(soft_val, cfg.temperature, cfg.lam))


@dataclass
class StudentReport:
    clean_accuracy: float
    fgsm: list
    cw: list
    cw_success_rate: float  # uncapped, over clean-correct test items
    history: dict


def evaluate_student(model, test, cfg, history=None):
    fgsm = epsilon_sweep(model, test, "fgsm", cfg.epsilons, temperature=cfg.attack_temperature)
    cw = epsilon_sweep(model, test, "cw", cfg.epsilons, cw=cfg.cw)
    correct = forward_logits(model, test.images).argmax(axis=1) == test.labels
    if correct.any():
        res = cw_attack(model, test.images[correct], test.labels[correct], cfg.cw)
        rate = res.success_rate
    else:
        rate = 0.0
    return StudentReport(accuracy(model, test), fgsm, cw, rate, history or {})


def distill_pipeline(ds, cfg, split_spec=None):
    """Teacher, distilled student and identically seeded baseline student, plus their robustness report.

    ``ds`` is either one dataset (split with ``split_spec``, default 2/3,
    1/6, 1/6) or an already split ``(train, val, test)`` tuple.
    Returns ``(teacher, distilled, baseline, report)``.
    """
    if isinstance(ds, tuple):
        train_ds, val_ds, test = ds
    else:
        train_ds, val_ds, test = split(ds, split_spec or default_split(ds, cfg.seed))
    teacher, teacher_hist = train_teacher(train_ds, val_ds, cfg)
    logger.info("teacher accuracy (T=1): train %.3f test %.3f",
                accuracy(teacher, train_ds), accuracy(teacher, test))
    soft_train = soften_labels(teacher, train_ds, cfg.temperature)
    soft_val = soften_labels(teacher, val_ds, cfg.temperature)
    distilled, distilled_hist = train_student(train_ds, val_ds, cfg, soft_train, soft_val)
    baseline, baseline_hist = train_student(train_ds, val_ds, cfg)
    report = {
        "teacher": {"history": teacher_hist, "clean_accuracy": accuracy(teacher, test)},
        "distilled": evaluate_student(distilled, test, cfg, distilled_hist),
        "baseline": evaluate_student(baseline, test, cfg, baseline_hist),
    }
    return teacher, distilled, baseline, report
