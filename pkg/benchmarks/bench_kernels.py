"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from homlab import kernels
from homlab.partition import build_partition


def _time(fn, *args, repeat=5):
    fn(*args)  # warm-up (JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_divform():
    rng = np.random.default_rng(0)
    print(f"{'divform_apply':<24}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for d, n in ((2, 256), (2, 512), (3, 64)):
        shape = (n,) * d
        a = 0.25 + 0.75 * rng.random((d, d) + shape)
        a = (a + np.swapaxes(a, 0, 1)) / 2
        u = rng.standard_normal(shape)
        t_np = _time(kernels.divform_apply_numpy, a, u, 0.0)
        if kernels.USE_NUMBA:
            t_nb = _time(kernels.divform_apply, a, u, 0.0)
            out_np = kernels.divform_apply_numpy(a, u, 0.0)
            out_nb = kernels.divform_apply(a, u, 0.0)
            assert np.allclose(out_np, out_nb, atol=1e-10)
            print(f"d={d} n={n:<18}{t_np * 1e3:>10.2f}ms"
                  f"{t_nb * 1e3:>10.2f}ms{t_np / t_nb:>9.1f}x")
        else:
            print(f"d={d} n={n:<18}{t_np * 1e3:>10.2f}ms"
                  f"{'-':>12}{'-':>10}")


def bench_interaction():
    print(f"\n{'pair_interaction_sup':<24}{'numpy':>12}{'numba':>12}"
          f"{'speedup':>10}")
    for beta, w in ((0.0, 13.5), (0.3, 40.5)):
        part = build_partition(w, beta, 2)
        args = (part.corners, part.sides, 2.5)
        t_np = _time(kernels.pair_interaction_sup_numpy, *args, repeat=3)
        if kernels.USE_NUMBA:
            t_nb = _time(kernels.pair_interaction_sup, *args, repeat=3)
            v_np = kernels.pair_interaction_sup_numpy(*args)
            v_nb = kernels.pair_interaction_sup(*args)
            assert abs(v_np - v_nb) < 1e-9 * abs(v_np)
            print(f"{part.corners.shape[0]} cells{'':<10}"
                  f"{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
                  f"{t_np / t_nb:>9.1f}x")
        else:
            print(f"{part.corners.shape[0]} cells{'':<10}"
                  f"{t_np * 1e3:>10.2f}ms{'-':>12}{'-':>10}")


if __name__ == "__main__":
    print(f"numba path enabled: {kernels.USE_NUMBA}\n")
    bench_divform()
    bench_interaction()
