"""Time the compiled and numpy kernel backends on the shapes the models use.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Also runs one training epoch of student-cnn per backend, and checks that
both backends produce the same numbers before timing them.
"""
import argparse
import time

import numpy as np

from advworkbench import kernels
from advworkbench.data import default_split, generate_synthetic, split
from advworkbench.models import init_params, reference_specs
from advworkbench.train import TrainConfig, train


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    for n, c, o, side in ((64, 1, 8, 16), (64, 8, 16, 14), (256, 8, 16, 14)):
        x = rng.random((n, c, side, side))
        w = rng.standard_normal((o, c, 3, 3))
        b = rng.standard_normal(o)
        gout = rng.standard_normal((n, o, side - 2, side - 2))
        yield f"conv fwd+bwd N={n} C={c} O={o} {side}x{side}", lambda: (
            kernels.conv2d_forward(x, w, b, 1), kernels.conv2d_backward(gout, x, w, 1))
    yield "xorshift 1e5 draws", lambda: kernels.xorshift_block(0x9E3779B97F4A7C15, 100_000)


def check_agreement():
    rng = np.random.default_rng(1)
    x = rng.random((5, 3, 9, 9))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    gout = rng.standard_normal((5, 4, 4, 4))
    out = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        out[name] = (kernels.conv2d_forward(x, w, b, 2), *kernels.conv2d_backward(gout, x, w, 2),
                     kernels.xorshift_block(12345, 100)[0])
    ref = out["python"]
    for name, got in out.items():
        for a, r in zip(got, ref):
            assert np.allclose(a, r, rtol=1e-12, atol=1e-12) if a.dtype.kind == "f" else np.array_equal(a, r), name


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    check_agreement()
    rows = {}
    for name in backends:
        kernels.use_backend(name)
        for label, fn in cases():
            rows.setdefault(label, {})[name] = best_of(fn, args.repeat)
        ds = generate_synthetic()
        tr, va, _ = split(ds, default_split(ds))
        model = init_params(reference_specs()["student-cnn"], 0)
        t0 = time.perf_counter()
        train(model, tr, va, TrainConfig(epochs=1))
        rows.setdefault("student-cnn, 1 epoch", {})[name] = time.perf_counter() - t0
    print(f"{'case':<40}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, t in rows.items():
        line = f"{label:<40}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{t['python'] / t['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
