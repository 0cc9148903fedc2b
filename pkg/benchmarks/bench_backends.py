"""Times the numba and numpy kernel backends on backbone-sized workloads.

Run:  python3 benchmarks/bench_backends.py [--reps 30]

Imports both implementation modules directly, so the DEFOCR_BACKEND
environment variable does not matter here.
"""

import argparse
import time

import numpy as np

from defocr.kernels import numpy_impl
from defocr.rng import SplitMix64

try:
    from defocr.kernels import numba_impl
except ImportError:
    numba_impl = None

# (label, c_in, c_out, H, W, stride): the default backbone's conv shapes.
CASES = [
    ("stem 1->16 32x128 s1", 1, 16, 32, 128, 1),
    ("stage1 16->16 32x128 s1", 16, 16, 32, 128, 1),
    ("stage2 16->32 34x130 s2", 16, 32, 34, 130, 2),
    ("stage3 32->64 18x66 s2", 32, 64, 18, 66, 2),
    ("stage4 64->64 10x34 s2", 64, 64, 10, 34, 2),
]


def _time(fn, reps):
    fn()  # warmup (JIT compile / cache touch)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps * 1e3


def bench_impl(impl, reps):
    rng = SplitMix64(0)
    rows = []
    for label, c_in, c_out, h, w, stride in CASES:
        x = rng.uniform_array((c_in, h, w))
        wt = rng.uniform_array((c_out, c_in, 3, 3), -0.1, 0.1)
        b = rng.uniform_array((c_out,), -0.1, 0.1)
        out = impl.conv2d_forward(x, wt, b, stride)
        grad = np.ones_like(out)
        fwd = _time(lambda: impl.conv2d_forward(x, wt, b, stride), reps)
        bwd = _time(lambda: impl.conv2d_backward(x, wt, grad, stride), reps)

        off = rng.uniform_array((18, out.shape[1], out.shape[2]), -0.4, 0.4)
        dout, sampled = impl.deform_forward(x, wt, b, off, stride, 1)
        dfwd = _time(lambda: impl.deform_forward(x, wt, b, off, stride, 1), reps)
        dbwd = _time(
            lambda: impl.deform_backward(x, wt, off, grad, sampled, stride, 1), reps
        )
        rows.append((label, fwd, bwd, dfwd, dbwd))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=30)
    args = ap.parse_args()

    results = {"numpy": bench_impl(numpy_impl, args.reps)}
    if numba_impl is not None:
        results["numba"] = bench_impl(numba_impl, args.reps)
    else:
        print("numba not importable; timing numpy only\n")

    header = f"{'case':28s} {'conv fwd':>9s} {'conv bwd':>9s} {'def fwd':>9s} {'def bwd':>9s}"
    for name, rows in results.items():
        print(f"== {name} (ms/call, {args.reps} reps) ==")
        print(header)
        for label, fwd, bwd, dfwd, dbwd in rows:
            print(f"{label:28s} {fwd:9.3f} {bwd:9.3f} {dfwd:9.3f} {dbwd:9.3f}")
        print()

    if "numba" in results:
        print("== speedup numpy/numba ==")
        print(header)
        for (label, *np_t), (_, *nb_t) in zip(results["numpy"], results["numba"]):
            ratios = [a / b if b > 0 else float("inf") for a, b in zip(np_t, nb_t)]
            print(
                f"{label:28s} "
                + " ".join(f"{r:8.2f}x" for r in ratios)
            )


if __name__ == "__main__":
    main()
