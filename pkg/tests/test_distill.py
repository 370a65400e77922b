import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advworkbench import autodiff as ad
from advworkbench.attacks import CwConfig
from advworkbench.data import default_split, generate_synthetic, split
from advworkbench.distill import (DistillConfig, StudentReport, distill_pipeline, distillation_total_loss,
                                  soften_labels, train_student, train_teacher)
from advworkbench.metrics import accuracy
from advworkbench.models import forward_logits, init_params, reference_specs


@pytest.fixture(scope="module")
def small_splits():
    ds = generate_synthetic(6, 30, 8, 1)
    return split(ds, default_split(ds, 1))


def small_config(**kw):
    specs = reference_specs((1, 8, 8), 6)
    base = dict(teacher_spec=specs["teacher-cnn"], student_spec=specs["student-cnn"], epochs=2,
                cw=CwConfig(max_iterations=10), epsilons=(0.0, 0.05))
    base.update(kw)
    return DistillConfig(**base)


class TestTotalLoss:
    @pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
    def test_two_class_formula(self, lam):
        total = distillation_total_loss(ad.Tensor([0.6, 0.4]), ad.Tensor([0.8, 0.2]), ad.Tensor([1.0, 0.0]), 0, lam)
        expected = lam * (0.8 * math.log(0.8 / 0.6) + 0.2 * math.log(0.2 / 0.4))
        assert total.item() == pytest.approx(expected, abs=1e-15)

    def test_lambda_zero_is_cross_entropy(self, rng):
        p1 = rng.dirichlet(np.ones(5), size=4)
        pt = rng.dirichlet(np.ones(5), size=4)
        soft = rng.dirichlet(np.ones(5), size=4)
        y = [0, 2, 4, 1]
        total = distillation_total_loss(ad.Tensor(pt), ad.Tensor(soft), ad.Tensor(p1), y, 0.0)
        assert total.item() == ad.cross_entropy(p1, y).item()

    def test_perfect_student_is_zero(self):
        soft = ad.Tensor([0.7, 0.2, 0.1])
        assert distillation_total_loss(soft, soft, ad.Tensor([0.0, 1.0, 0.0]), 1, 4.0).item() == 0.0


class TestSoftLabels:
    def test_huge_temperature_is_uniform(self, small_splits):
        tr, _, _ = small_splits
        teacher = init_params(small_config().teacher_spec, 0)
        soft = soften_labels(teacher, tr, 1e6)
        assert np.abs(soft - 1 / 6).max() < 1e-3

    def test_unit_temperature_is_predictive_distribution(self, small_splits):
        tr, _, _ = small_splits
        teacher = init_params(small_config().teacher_spec, 0)
        soft = soften_labels(teacher, tr, 1.0)
        z = forward_logits(teacher, tr.images)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        assert np.allclose(soft, e / e.sum(axis=1, keepdims=True), rtol=1e-12, atol=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.5, 1e4), st.integers(0, 1000))
    def test_argmax_preserved(self, T, seed):
        ds = generate_synthetic(6, 3, 8, seed)
        teacher = init_params(reference_specs((1, 8, 8), 6)["teacher-cnn"], seed)
        soft = soften_labels(teacher, ds, T)
        z = forward_logits(teacher, ds.images)
        assert np.allclose(soft.sum(axis=1), 1.0, atol=1e-12)
        assert np.array_equal(soft.argmax(axis=1), z.argmax(axis=1))


class TestConfig:
    def test_student_must_be_smaller(self):
        specs = reference_specs()
        with pytest.raises(ValueError, match="fewer parameters"):
            DistillConfig(teacher_spec=specs["student-cnn"], student_spec=specs["teacher-cnn"])

    @pytest.mark.parametrize("kw", [dict(temperature=0.0), dict(lam=-1.0)])
    def test_bad_values(self, kw):
        with pytest.raises(ValueError):
            DistillConfig(**kw)

    def test_defaults(self):
        cfg = DistillConfig()
        assert (cfg.temperature, cfg.lam, cfg.attack_temperature) == (100.0, 1.0, 1.0)


class TestTraining:
    def test_teacher_deterministic_and_history_length(self, small_splits):
        tr, va, _ = small_splits
        cfg = small_config(epochs=3)
        a, ha = train_teacher(tr, va, cfg)
        b, hb = train_teacher(tr, va, cfg)
        assert ha == hb and len(ha["train_loss"]) == 3
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)

    def test_lambda_zero_matches_baseline_bitwise(self, small_splits):
        tr, va, _ = small_splits
        cfg = small_config(lam=0.0)
        teacher, _ = train_teacher(tr, va, cfg)
        soft_tr, soft_va = soften_labels(teacher, tr, cfg.temperature), soften_labels(teacher, va, cfg.temperature)
        distilled, _ = train_student(tr, va, cfg, soft_tr, soft_va)
        baseline, _ = train_student(tr, va, cfg)
        assert all(np.array_equal(distilled.params[k], baseline.params[k]) for k in baseline.params)

    @pytest.mark.slow
    def test_teacher_learns_at_high_temperature(self, synthetic_splits):
        _, (tr, va, _) = synthetic_splits
        teacher, history = train_teacher(tr, va, DistillConfig(epochs=10))
        assert accuracy(teacher, tr) >= 0.90
        assert len(history["lr"]) == 10

    def test_pipeline_report(self, small_splits):
        tr, va, te = small_splits
        teacher, distilled, baseline, report = distill_pipeline((tr, va, te), small_config())
        assert set(report) == {"teacher", "distilled", "baseline"}
        for tag in ("distilled", "baseline"):
            rep = report[tag]
            assert isinstance(rep, StudentReport)
            assert [r.epsilon for r in rep.fgsm] == [0.0, 0.05] == [r.epsilon for r in rep.cw]
            assert 0.0 <= rep.cw_success_rate <= 1.0
            assert rep.fgsm[0].top1_error == pytest.approx(1.0 - rep.clean_accuracy)
        assert distilled.spec == baseline.spec != teacher.spec

    def test_pipeline_splits_a_single_dataset(self):
        ds = generate_synthetic(6, 12, 8, 2)
        _, _, _, report = distill_pipeline(ds, small_config(epochs=1))
        assert len(report["teacher"]["history"]["train_loss"]) == 1
