"""Benchmark the compiled pairwise kernels against the pure-numpy fallback.

Run as a script:

    python benchmarks/bench_kernels.py [--repeats 7]

Both backends are imported directly (bypassing the import-time selection) so
the comparison works regardless of which one the package picked.
"""

import argparse
import time

import numpy as np

from nbodylab.kernels import _pure

try:
    from nbodylab.kernels import _core
except ImportError:
    _core = None


def _time_call(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _agreement(pure_out, core_out):
    if not isinstance(pure_out, tuple):
        pure_out, core_out = (pure_out,), (core_out,)
    worst = 0.0
    for a, b in zip(pure_out, core_out):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        denom = max(float(np.max(np.abs(a))), 1e-300)
        worst = max(worst, float(np.max(np.abs(a - b))) / denom)
    return worst


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = [
        ("small path", 128, 3, 2),
        ("medium path", 1024, 3, 2),
        ("large path", 8192, 4, 2),
    ]

    if _core is None:
        print("compiled backend unavailable; timing the pure backend only")

    header = f"{'case':<14} {'kernel':<26} {'pure (ms)':>10} {'cython (ms)':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, k, n, d in cases:
        xs = rng.standard_normal((k + 1, n, d)) * 3.0
        m = rng.uniform(0.5, 2.0, n)
        single = np.ascontiguousarray(xs[0])
        kernels = [
            ("min_pair_distance", (single,)),
            ("path_potentials", (xs, m)),
            ("path_potential_gradients", (xs, m)),
        ]
        for kname, kargs in kernels:
            t_pure = _time_call(getattr(_pure, kname), kargs, args.repeats)
            if _core is None:
                print(f"{name:<14} {kname:<26} {t_pure * 1e3:>10.3f} {'n/a':>12} {'n/a':>8}")
                continue
            t_core = _time_call(getattr(_core, kname), kargs, args.repeats)
            rel = _agreement(
                getattr(_pure, kname)(*kargs), getattr(_core, kname)(*kargs)
            )
            if rel > 1e-12:
                raise SystemExit(
                    f"backend disagreement in {kname} on {name}: {rel:.3e}"
                )
            print(
                f"{name:<14} {kname:<26} {t_pure * 1e3:>10.3f} "
                f"{t_core * 1e3:>12.3f} {t_pure / t_core:>7.2f}x"
            )
    print("\nbackends agree to 1e-12 relative on every case")


if __name__ == "__main__":
    main()
