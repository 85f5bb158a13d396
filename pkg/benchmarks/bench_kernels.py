"""Compare the compiled kernels with the numpy fallback.

Run ``python benchmarks/bench_kernels.py [--repeat N] [--size N]``. Each
kernel is timed on identical inputs with both backends; results are
checked for agreement before timing.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from pbrkit import _fallback

try:
    from pbrkit import _speedups
except ImportError:  # extension not built
    _speedups = None


def cases(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    x = rng.lognormal(0, 2, n)
    dev = np.abs(np.log(x / np.median(x)))
    ks = np.array([n // 10, n // 4, n // 2, n], dtype=np.int64)
    idx = rng.integers(0, n, size=(50, n))
    rows = rng.lognormal(0, 1, size=(200, n))
    pooled = rng.normal(size=40)
    perms = np.array([rng.permutation(40) for _ in range(5000)])
    mask = rng.random(n) < 0.1
    w = rng.integers(1, 5, n).astype(float)
    return {
        "gini": lambda m: m.gini(x),
        "weighted_gini": lambda m: m.weighted_gini(x, w),
        "gini_rows (200 rows)": lambda m: m.gini_rows(rows),
        "leave_one_out_gini": lambda m: m.leave_one_out_gini(x),
        "theil": lambda m: m.theil(x),
        "aligned_gini (4 steps)": lambda m: m.aligned_gini(x, dev, float(np.median(x)), ks),
        "bootstrap_alignment (50 reps)": lambda m: m.bootstrap_alignment(x, dev, idx, float(np.median(x)), ks),
        "permutation_mean_diff (5000)": lambda m: m.permutation_mean_diff(pooled, 20, perms),
        "resample_cis (50 reps)": lambda m: m.resample_cis(x, idx, mask),
    }


def check(a, b) -> bool:
    if isinstance(a, tuple):
        return all(check(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12, equal_nan=True)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=2000, help="vector length")
    ap.add_argument("--repeat", type=int, default=5, help="timing repeats (best is reported)")
    args = ap.parse_args(argv)
    if _speedups is None:
        print("compiled core not available; build with `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'kernel':32s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(args.size).items():
        if not check(fn(_fallback), fn(_speedups)):
            print(f"{name:32s} backends disagree")
            return 2
        t_np = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: fn(_speedups), number=1, repeat=args.repeat))
        print(f"{name:32s} {1e3 * t_np:10.3f} {1e3 * t_cy:10.3f} {t_np / t_cy:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
