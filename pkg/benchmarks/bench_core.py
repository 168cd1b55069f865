"""Benchmark the compiled grid-scan kernel against the pure-Python fallback.

Usage: python benchmarks/bench_core.py [--landscapes N] [--repeats R]

Scans the full acceleration grid (merge ratio x cache interval x fp16 x
every gate step, with a step-reduction axis) for N random landscapes with
each implementation, checks the results agree bit for bit, and prints the
timing ratio.
"""

from __future__ import annotations

import argparse
import time

from accelbench import _core
from accelbench._core import py_fallback
from accelbench.backends.sim import GRID_CACHE_INTERVALS, GRID_MERGE_RATIOS, SimLandscape


def scan_args(landscape: SimLandscape, pipeline: str = "StableDiffusionPipeline"):
    profile = landscape.profile(pipeline)
    steps_options = tuple(
        sorted({max(10, profile.n_base // 2), profile.n_base})
    )
    return (
        profile.q0,
        0.05,
        landscape.k_tm,
        landscape.k_fr,
        landscape.k_ga,
        landscape.k_st,
        landscape.fp16_mult,
        landscape.fp16_qfrac,
        GRID_MERGE_RATIOS,
        GRID_CACHE_INTERVALS,
        steps_options,
        profile.n_base,
        True,
        True,
    )


def time_impl(fn, args_list, repeats: int) -> float:
    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        for args in args_list:
            fn(*args)
        timings.append(time.perf_counter() - start)
    return min(timings)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--landscapes", type=int, default=20)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    args_list = [scan_args(SimLandscape.random(seed)) for seed in range(args.landscapes)]
    grid_points = sum(
        len(a[8]) * len(a[9]) * 2 * sum(a[10]) for a in args_list
    )

    mismatches = [
        seed
        for seed, a in enumerate(args_list)
        if _core.scan_max_speedup(*a) != py_fallback.scan_max_speedup(*a)
    ]
    if mismatches:
        raise SystemExit(f"result mismatch on landscapes {mismatches}")

    t_py = time_impl(py_fallback.scan_max_speedup, args_list, args.repeats)
    t_active = time_impl(_core.scan_max_speedup, args_list, args.repeats)

    print(f"active kernel: {_core.KERNEL_BACKEND}")
    print(f"landscapes: {args.landscapes}, total grid points: {grid_points}")
    print(f"pure python : {t_py:8.4f} s  ({grid_points / t_py / 1e6:6.2f} Mpoints/s)")
    label = "compiled" if _core.KERNEL_BACKEND == "compiled" else "fallback (same path)"
    print(f"{label:<12}: {t_active:8.4f} s  ({grid_points / t_active / 1e6:6.2f} Mpoints/s)")
    if _core.KERNEL_BACKEND == "compiled":
        print(f"speedup     : {t_py / t_active:8.1f}x, results bit-identical")


if __name__ == "__main__":
    main()
