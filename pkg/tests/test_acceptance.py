"""Acceptance criteria, one test per criterion.

Each ``criterion_N`` returns ``(passed, detail)``. Under pytest the results
are printed as one PASS/FAIL line each in the terminal summary; running this
file directly prints the same lines:

    python3 tests/test_acceptance.py
"""
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from advworkbench.attacks import FGSM_EPSILONS, CwConfig, FgsmConfig, cw_attack, epsilon_sweep, fgsm_attack
from advworkbench.checkpoint import load_checkpoint, save_checkpoint
from advworkbench.cli import main as cli_main
from advworkbench.data import default_split, generate_synthetic, split
from advworkbench.distill import DistillConfig, distill_pipeline
from advworkbench.metrics import accuracy, topk_error_from_logits
from advworkbench.models import forward_logits, init_params, reference_specs
from advworkbench.train import AdamState, PlateauScheduler, TrainConfig, adam_step, train
from gradcheck import check_random_model

RESULTS = {}
_cache = {}

TITLES = {
    1: "gradient correctness",
    2: "FGSM contract",
    3: "FGSM trend",
    4: "CW effectiveness and minimality",
    5: "distillation helps FGSM",
    6: "distillation fails against CW",
    7: "metric oracle",
    8: "scheduler/optimizer fixtures",
    9: "reproducibility",
}


def _splits():
    if "splits" not in _cache:
        ds = generate_synthetic()
        _cache["splits"] = split(ds, default_split(ds, 0))
    return _cache["splits"]


def _student():
    if "student" not in _cache:
        tr, va, _ = _splits()
        t0 = time.perf_counter()
        model, _ = train(init_params(reference_specs()["student-cnn"], 0), tr, va, TrainConfig(epochs=10))
        _cache["student"] = model, time.perf_counter() - t0
    return _cache["student"]


def criterion_1():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        err, _ = check_random_model(seed, "mlp" if seed % 2 else "cnn")
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    return worst < 1e-4 and elapsed < 60, f"worst relative error {worst:.2e} over 50 models, {elapsed:.1f}s"


def criterion_2():
    model, _ = _student()
    rng = np.random.default_rng(2)
    x = rng.random((1000, 1, 16, 16))
    y = rng.integers(0, 10, 1000)
    ok = np.array_equal(fgsm_attack(model, x, y, FgsmConfig(0.0)).adversarial, x)
    worst = -np.inf
    for eps in FGSM_EPSILONS:
        adv = fgsm_attack(model, x, y, FgsmConfig(eps)).adversarial
        worst = max(worst, float(np.abs(adv - x).max() - eps))
        ok &= bool(np.abs(adv - x).max() <= eps + 1e-9 and adv.min() >= 0.0 and adv.max() <= 1.0)
    return bool(ok), f"eps=0 identity and box held; max(Linf - eps) = {worst:.1e}"


def criterion_3():
    tr, _, te = _splits()
    model, train_time = _student()
    t0 = time.perf_counter()
    recs = epsilon_sweep(model, te, "fgsm", FGSM_EPSILONS)
    elapsed = train_time + time.perf_counter() - t0
    train_acc, test_acc = accuracy(model, tr), accuracy(model, te)
    clean = 1.0 - test_acc
    at04 = next(r.top1_error for r in recs if r.epsilon == 0.04)
    tail = [r.top1_error for r in recs if r.epsilon >= 0.04]
    rise, spread = at04 - clean, max(tail) - min(tail)
    ok = train_acc >= 0.95 and test_acc >= 0.85 and rise >= 0.40 and spread <= 0.10 and elapsed < 300
    return ok, (f"train {train_acc:.3f} test {test_acc:.3f}; error rise at 0.04 = {100 * rise:.1f} pts; "
                f"spread over [0.04, 0.10] = {100 * spread:.1f} pts; {elapsed:.1f}s")


def criterion_4():
    _, _, te = _splits()
    model, _ = _student()
    x, y = te.images[:200], te.labels[:200]
    correct = forward_logits(model, x).argmax(axis=1) == y
    t0 = time.perf_counter()
    cw = cw_attack(model, x, y, CwConfig(c=1.0, kappa=0.0, max_iterations=500, step_size=0.01))
    elapsed = time.perf_counter() - t0
    fg = fgsm_attack(model, x, y, FgsmConfig(0.04))
    rate = float(cw.success[correct].mean())
    both = cw.success & fg.success & correct
    l2_cw, l2_fg = float(cw.l2[both].mean()), float(fg.l2[both].mean())
    ok = rate >= 0.80 and both.any() and l2_cw < l2_fg and elapsed < 600
    return ok, (f"CW success {rate:.3f} on {int(correct.sum())} correct items; mean L2 CW {l2_cw:.4f} vs "
                f"FGSM@0.04 {l2_fg:.4f} on {int(both.sum())} shared successes; {elapsed:.1f}s")


def _distill():
    if "distill" not in _cache:
        _cache["distill"] = distill_pipeline(_splits(), DistillConfig(temperature=100.0, lam=1.0, epochs=10))
    return _cache["distill"]


def criterion_5():
    _, _, _, report = _distill()
    d, b = report["distilled"], report["baseline"]

    def acc(rep, eps):
        return 1.0 - next(r.top1_error for r in rep.fgsm if r.epsilon == eps)

    gains = {eps: acc(d, eps) - acc(b, eps) for eps in (0.02, 0.05)}
    clean_gap = abs(d.clean_accuracy - b.clean_accuracy)
    ok = all(g >= 0.10 for g in gains.values()) and clean_gap <= 0.05
    return ok, (f"FGSM accuracy distilled vs baseline: eps 0.02 {acc(d, 0.02):.3f} vs {acc(b, 0.02):.3f}, "
                f"eps 0.05 {acc(d, 0.05):.3f} vs {acc(b, 0.05):.3f} (need +0.10); "
                f"clean {d.clean_accuracy:.3f} vs {b.clean_accuracy:.3f}")


def criterion_6():
    _, _, _, report = _distill()
    d, b = report["distilled"].cw_success_rate, report["baseline"].cw_success_rate
    return d >= 0.8 * b, f"uncapped CW success: distilled {d:.3f}, baseline {b:.3f}"


def _oracle_topk(logits, labels, k):
    misses = 0
    for row, y in zip(logits.tolist(), labels.tolist()):
        ranked = sorted(range(len(row)), key=lambda c: (-row[c], c))
        misses += y not in ranked[:k]
    return misses / len(labels)


def criterion_7():
    rng = np.random.default_rng(7)
    mismatches = violations = ties = 0
    for i in range(10_000):
        n, k = int(rng.integers(1, 12)), int(rng.integers(5, 12))
        if i % 2:
            logits = rng.integers(-1, 2, (n, k)).astype(float)
        else:
            logits = rng.normal(size=(n, k))
            logits[:, rng.integers(0, k)] = logits[:, rng.integers(0, k)]
        ties += int(any(len(set(r)) < k for r in logits.tolist()))
        labels = rng.integers(0, k, n)
        t1, t5 = topk_error_from_logits(logits, labels, 1), topk_error_from_logits(logits, labels, 5)
        mismatches += (t1 != _oracle_topk(logits, labels, 1)) + (t5 != _oracle_topk(logits, labels, 5))
        violations += t5 > t1
    ok = mismatches == 0 and violations == 0
    return ok, f"{mismatches} oracle mismatches, {violations} top5>top1 cases, {ties} sets with ties"


def criterion_8():
    g = np.array([0.3, -2.0, 1e-3, 5.0])
    new, _ = adam_step(AdamState(lr=1e-3), {"w": np.zeros(4)}, {"w": g})
    adam_ok = np.allclose(new["w"], -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12, atol=0)
    s, lr, trace = PlateauScheduler(factor=0.1, patience=3, min_lr=1e-4), 0.01, []
    for loss in (1.0, 0.9, 0.95, 0.96, 0.97, 0.98):
        lr = s.step(loss, lr)
        trace.append(lr)
    floor = PlateauScheduler()
    lr_f = 1e-4
    for _ in range(12):
        lr_f = floor.step(1.0, lr_f)
    trace_ok = trace == [0.01, 0.01, 0.01, 0.01, 0.01, 0.001] and lr_f == 1e-4
    return bool(adam_ok and trace_ok), f"Adam first step closed form {adam_ok}; plateau trace {trace}; floor {lr_f}"


def criterion_9():
    with tempfile.TemporaryDirectory() as tmp:
        cwd = os.getcwd()
        os.chdir(tmp)
        try:
            codes = [cli_main(["train", "--epochs", "3", "--out", "s.ckpt"]),
                     cli_main(["sweep", "--ckpt", "s.ckpt", "--epsilons", "paper-fgsm", "--out", "f.csv"])]
            for run in ("run1", "run2"):
                codes.append(cli_main(["replay", "--manifest", "f.manifest.json", "--out-dir", run]))
            files = [(Path(run) / name).read_bytes() for run in ("run1", "run2") for name in ("f.csv", "f.svg")]
            sweep_ok = codes == [0, 0, 0, 0] and files[0] == files[2] and files[1] == files[3]
            model = load_checkpoint("s.ckpt")
            save_checkpoint(model, "copy.ckpt")
            back = load_checkpoint("copy.ckpt", model.spec)
            ckpt_ok = all(back.params[k].tobytes() == v.tobytes() for k, v in model.params.items())
            ckpt_ok &= Path("copy.ckpt").read_bytes() == Path("s.ckpt").read_bytes()
        finally:
            os.chdir(cwd)
    return bool(sweep_ok and ckpt_ok), f"exit codes {codes}; replayed CSV/SVG identical {sweep_ok}; checkpoint identity {ckpt_ok}"


def _run(n):
    ok, detail = globals()[f"criterion_{n}"]()
    RESULTS[n] = (bool(ok), detail)
    return bool(ok), detail


def line(n):
    ok, detail = RESULTS[n]
    return f"criterion {n} ({TITLES[n]}): {'PASS' if ok else 'FAIL'} | {detail}"


def summary_lines():
    return [line(n) for n in sorted(RESULTS)]


@pytest.mark.parametrize("n", sorted(TITLES), ids=[f"criterion_{n}" for n in sorted(TITLES)])
def test_criterion(n):
    ok, detail = _run(n)
    assert ok, detail


if __name__ == "__main__":
    for n in sorted(TITLES):
        _run(n)
        print(line(n), flush=True)
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
