#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-Python fallback.

Runs each hot kernel on model-realistic shapes with both cores, checks the
outputs are value-identical, and prints wall times plus speedups. Usage:

    python benchmarks/bench_kernels.py [--repeat N] [--dtype f32|f64]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from graphdiff.ops import _slowcore

try:
    from graphdiff.ops import _fastkernels
except ImportError:
    _fastkernels = None


def timed(fn, args, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return out, best


def cases(dtype):
    rng = np.random.default_rng(42)

    def t(*shape):
        return rng.standard_normal(shape).astype(dtype)

    x_conv = t(4, 16, 56, 56)
    w_conv = t(32, 16, 3, 3)
    yield ("conv2d 4x16x56x56 * 32x16x3x3", "conv2d_core",
           (x_conv, w_conv, (1, 1), (1, 1), (1, 1), 1, (4, 32, 56, 56)))
    x_pool = t(8, 32, 64, 64)
    yield ("max_pool2d 8x32x64x64 k3s2", "max_pool2d_core",
           (x_pool, (3, 3), (2, 2), (1, 1), (1, 1), (8, 32, 32, 32)))
    yield ("adaptive_avg_pool2d 8x32x64x64 -> 7x7", "adaptive_avg_pool2d_core",
           (x_pool, (8, 32, 7, 7)))
    yield ("matmul 16 x (128x256)(256x128)", "matmul3_core",
           (t(16, 128, 256), t(16, 256, 128)))
    yield ("linear 2048x512 -> 512", "linear_core", (t(2048, 512), t(512, 512)))
    yield ("softmax rows 4096x512", "softmax_rows_core", (t(4096, 512),))
    yield ("layer_norm rows 4096x512", "layer_norm_rows_core", (t(4096, 512), 1e-5))
    yield ("gelu 4M elements", "gelu_core", (t(4 * 1024 * 1024),))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--dtype", choices=["f32", "f64"], default="f32")
    args = ap.parse_args()
    dtype = np.float32 if args.dtype == "f32" else np.float64

    if _fastkernels is None:
        print("compiled core not built; showing pure-Python timings only\n")
    print(f"{'kernel':<38} {'python':>10} {'compiled':>10} {'speedup':>9}  equal")
    print("-" * 78)
    for label, name, kernel_args in cases(dtype):
        slow_fn = getattr(_slowcore, name)
        out_slow, t_slow = timed(slow_fn, kernel_args, args.repeat)
        if _fastkernels is None:
            print(f"{label:<38} {t_slow * 1e3:>8.1f}ms {'-':>10} {'-':>9}")
            continue
        fast_fn = getattr(_fastkernels, name)
        out_fast, t_fast = timed(fast_fn, kernel_args, args.repeat)
        same = np.array_equal(out_slow, out_fast, equal_nan=True)
        print(f"{label:<38} {t_slow * 1e3:>8.1f}ms {t_fast * 1e3:>8.1f}ms "
              f"{t_slow / t_fast:>8.1f}x  {same}")
        if not same:
            raise SystemExit(f"core mismatch on {label}")


if __name__ == "__main__":
    main()
