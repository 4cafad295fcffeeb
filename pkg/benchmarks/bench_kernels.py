"""Compare the compiled kernel backend against the pure-numpy fallback.

Runs the four batch kernels on identical inputs, times both backends, and
checks that results agree to machine precision.

Usage: python3 benchmarks/bench_kernels.py [--samples 2000000] [--n 3]
"""

import argparse
import time

import numpy as np

from minsurf import _kernels_np

try:
    from minsurf import _kernels

    HAVE_C = True
except ImportError:
    _kernels = None
    HAVE_C = False

KERNELS = ["area_batch", "area_gradient_batch", "inner_stress_batch", "minor_max_batch"]


def bench(fn, Z, repeats=5):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(Z)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=2_000_000)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    Z = np.ascontiguousarray(rng.uniform(-2, 2, (args.samples, args.n, 2)))
    print(f"batch: {args.samples} matrices of shape ({args.n}, 2)")
    if not HAVE_C:
        print("compiled backend unavailable; timing numpy fallback only")

    for name in KERNELS:
        t_np, out_np = bench(getattr(_kernels_np, name), Z)
        line = f"{name:24s} numpy {t_np * 1e3:8.1f} ms"
        if HAVE_C:
            t_c, out_c = bench(getattr(_kernels, name), Z)
            diff = float(np.max(np.abs(np.asarray(out_c) - out_np)))
            assert diff <= 1e-12, f"{name}: backends disagree by {diff}"
            line += f"   compiled {t_c * 1e3:8.1f} ms   speedup {t_np / t_c:5.2f}x   max|diff| {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
