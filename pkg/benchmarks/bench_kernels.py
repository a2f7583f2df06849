#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Workload sizes mirror the Monte Carlo loads the package actually runs
(variance-factor sweeps, risk decomposition, selection experiments).
Run `COVSEL_DISABLE_NUMBA=1 python benchmarks/bench_kernels.py` to confirm
the fallback path alone, or run as-is to see both side by side.
"""

import time

import numpy as np

from covsel import _kernels
from covsel.linalg import projector_from_design

CASES = [
    ("variance-factor sweep", 100_000, 10, 2, 2),
    ("risk decomposition", 2_000, 50, 8, 5),
    ("selection experiment", 500, 200, 16, 6),
]

REPEATS = 3


def make_inputs(rng, reps, n, p, m_count):
    x = rng.standard_normal((reps, n, p))
    projs = []
    for k in range(1, m_count + 1):
        proj, _ = projector_from_design(rng.standard_normal((p, min(k, p))))
        projs.append(proj)
    a = rng.standard_normal((p, p))
    return x, np.stack(projs), a @ a.T


def best_time(fn, *args):
    times = []
    for _ in range(REPEATS):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    rng = np.random.default_rng(0)
    print(f"active backend: {_kernels.backend_name()}")
    header = f"{'case':<24} {'reps x n x p x M':<20} {'numpy':>9} {'numba':>9} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, reps, n, p, m_count in CASES:
        x, projs, sigma = make_inputs(rng, reps, n, p, m_count)
        if _kernels.HAVE_NUMBA:
            # trigger compilation outside the timed region
            _kernels.model_stats_jit(x[:2], projs)
            _kernels.deviation_jit(x[:2], projs, sigma)

        t_np = best_time(_kernels.model_stats_numpy, x, projs)
        t_np += best_time(_kernels.deviation_numpy, x, projs, sigma)
        if _kernels.HAVE_NUMBA:
            t_nb = best_time(_kernels.model_stats_jit, x, projs)
            t_nb += best_time(_kernels.deviation_jit, x, projs, sigma)
            speedup = f"{t_np / t_nb:7.1f}x"
            nb_col = f"{t_nb:8.3f}s"
        else:
            nb_col, speedup = "     n/a", "     n/a"
        shape = f"{reps} x {n} x {p} x {m_count}"
        print(f"{name:<24} {shape:<20} {t_np:8.3f}s {nb_col} {speedup}")


if __name__ == "__main__":
    main()
